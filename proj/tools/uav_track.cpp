#include "uavtrack/commands.hpp"

int main(int argc, char** argv) { return uavtrack::run_cli(argc, argv); }
