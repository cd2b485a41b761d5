#include <iostream>

#include "CLI11.hpp"

#include "uavtrack/commands.hpp"

namespace uavtrack {

int run_cli(int argc, const char* const* argv) {
    configure_logging();
    CLI::App app{"UAV moving-target tracking: train, evaluate and compare policies"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train a policy and write weights, logs and a manifest");
    t->add_option("--config", train.config, "run config file")->required()->check(CLI::ExistingFile);
    t->add_option("--algo", train.algo, "dqn|ddqn|baseline|random");
    t->add_option("--seed", train.seed, "master seed");
    t->add_option("--episodes", train.episodes, "override train.episodes");
    t->add_option("--out", train.out, "output directory");

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "roll out a frozen policy and report metrics");
    e->add_option("--config", eval.config, "run config file");
    e->add_option("--model", eval.model, "model directory or weights file");
    e->add_option("--algo", eval.algo, "dqn|ddqn|baseline|random");
    e->add_option("--episodes", eval.episodes, "evaluation episodes");
    e->add_option("--seed", eval.seed, "master seed");
    e->add_option("--out", eval.out, "output directory");
    e->add_option("--r", eval.r, "CT exponent (>= 1)");
    e->add_flag("--lifelong", eval.lifelong, "keep learning during evaluation");
    e->add_flag("--force", eval.force, "ignore a config hash mismatch");
    e->add_option("--compare", eval.compare, "baseline|random on the same seeds");

    SweepArgs sweep;
    auto* s = app.add_subcommand("sweep-drift", "train and evaluate across wind speeds");
    s->add_option("--config", sweep.config, "run config file")->required()->check(CLI::ExistingFile);
    s->add_option("--speeds", sweep.speeds, "wind speeds")->required()->delimiter(',');
    s->add_option("--mode", sweep.mode, "none|static|random");
    s->add_option("--algos", sweep.algos, "policies to compare")->delimiter(',');
    s->add_option("--seed", sweep.seed, "master seed");
    s->add_option("--episodes", sweep.episodes, "training episodes");
    s->add_option("--eval-episodes", sweep.eval_episodes, "evaluation episodes");
    s->add_option("--parallel", sweep.parallel, "worker threads");
    s->add_option("--out", sweep.out, "output directory");

    CurriculumArgs cur;
    auto* c = app.add_subcommand("curriculum", "fine-tune a trained model on a new environment");
    c->add_option("--model", cur.model, "source model directory")->required();
    c->add_option("--config", cur.config, "target run config")->required()->check(CLI::ExistingFile);
    c->add_option("--budget", cur.budget, "fraction of the full training episodes");
    c->add_option("--seed", cur.seed, "master seed");
    c->add_option("--eval-episodes", cur.eval_episodes, "evaluation episodes");
    c->add_option("--out", cur.out, "output directory");

    MetricsArgs met;
    auto* m = app.add_subcommand("metrics", "recompute a report from trajectory CSVs");
    m->add_option("logs", met.logs, "trajectory files or directories")->required();
    m->add_option("--config", met.config, "run config (metrics options, side length)");
    m->add_option("--out", met.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval(eval);
    if (s->parsed()) return cmd_sweep_drift(sweep);
    if (c->parsed()) return cmd_curriculum(cur);
    return cmd_metrics(met);
}

}  // namespace uavtrack
