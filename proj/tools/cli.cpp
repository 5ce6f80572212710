#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "ebsg/data_io.hpp"
#include "ebsg/demos.hpp"
#include "ebsg/energy.hpp"
#include "ebsg/equivalence.hpp"
#include "ebsg/errors.hpp"
#include "ebsg/eval.hpp"
#include "ebsg/gan.hpp"
#include "ebsg/generator.hpp"
#include "ebsg/maxent.hpp"
#include "ebsg/numerics.hpp"
#include "ebsg/oracle.hpp"
#include "ebsg/vocabulary.hpp"

namespace ebsg::cli {
namespace {

struct Io {
    std::istream& in;
    std::ostream& out;
    std::ostream& err;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string fmt_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Persists the fully resolved option set of a run next to its primary
/// output, so every artifact records exactly how it was produced
/// (defaults < config file < command-line flags). The section header makes
/// the file round-trippable through --config unchanged.
void write_resolved_config(const CLI::App& sub, const std::string& primary_output) {
    atomic_write_text(primary_output + ".resolved.cfg",
                      "[" + sub.get_name() + "]\n" +
                          sub.config_to_str(/*default_also=*/true, /*write_description=*/false));
}

/// Where the demonstration sequences come from: a session CSV cut into
/// fixed-length windows.
struct DataOpts {
    std::string demos_path;
    int horizon = 8;
    int stride = 1;
};

void add_data_options(CLI::App& sub, DataOpts& d) {
    sub.add_option("--demos", d.demos_path, "session CSV of demonstration data")
        ->required();
    sub.add_option("--horizon", d.horizon, "window length T cut from each session")
        ->capture_default_str();
    sub.add_option("--stride", d.stride, "window start spacing within a session")
        ->capture_default_str();
}

DemoSet load_demo_windows(const DataOpts& d) {
    return ingest_sessions(d.demos_path, SessionWindowing{d.horizon, d.stride});
}

struct GeneratorOpts {
    std::string kind = "tabular";
    int order = 1;
    int embed_dim = 8;
    int hidden_dim = 16;
};

void add_generator_options(CLI::App& sub, GeneratorOpts& g) {
    sub.add_option("--gen-kind", g.kind, "generator family")
        ->check(CLI::IsMember({"tabular", "recurrent"}))
        ->capture_default_str();
    sub.add_option("--order", g.order, "context order of the tabular generator")
        ->capture_default_str();
    sub.add_option("--embed-dim", g.embed_dim, "embedding width of the recurrent generator")
        ->capture_default_str();
    sub.add_option("--hidden-dim", g.hidden_dim, "hidden width of the recurrent generator")
        ->capture_default_str();
}

GeneratorModel build_generator(const GeneratorOpts& g, int vocab_size, std::uint64_t init_seed) {
    if (g.kind == "tabular") {
        return make_tabular_generator(vocab_size, g.order);
    }
    return make_recurrent_generator(vocab_size, g.embed_dim, g.hidden_dim, init_seed);
}

bool exact_chain_supported(const GeneratorModel& gen) {
    const auto* tab = std::get_if<TabularGenerator>(&gen);
    return tab != nullptr && tab->order == 1;
}

void register_make_synthetic(CLI::App& app, Io io) {
    struct Opts {
        int vocab_size = 5;
        int horizon = 8;
        int n_demos = 1000;
        double concentration = 1.0;
        std::uint64_t seed = 1;
        std::string oracle_out = "oracle.json";
        std::string demos_out = "demos.csv";
    };
    auto opts = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand(
        "make-synthetic", "Create a ground-truth Markov oracle and sample demo sessions from it");
    sub->fallthrough();
    sub->add_option("--vocab-size", opts->vocab_size, "number of items V")->capture_default_str();
    sub->add_option("--horizon", opts->horizon, "sequence length T")->capture_default_str();
    sub->add_option("--n-demos", opts->n_demos, "number of demo sequences")->capture_default_str();
    sub->add_option("--concentration", opts->concentration,
                    "Dirichlet concentration of the oracle rows (small = peaked)")
        ->capture_default_str();
    sub->add_option("--seed", opts->seed, "master seed; oracle and demo seeds derive from it")
        ->capture_default_str();
    sub->add_option("--oracle-out", opts->oracle_out, "oracle checkpoint path")
        ->capture_default_str();
    sub->add_option("--demos-out", opts->demos_out, "demo session CSV path")
        ->capture_default_str();

    sub->callback([opts, sub, io] {
        Rng master(opts->seed);
        const std::uint64_t oracle_seed = master.next_u64();
        const std::uint64_t demo_seed = master.next_u64();
        const MarkovOracle oracle =
            make_markov_oracle(opts->vocab_size, oracle_seed, opts->concentration);
        const DemoSet demos = sample_demos(oracle, opts->n_demos, opts->horizon, demo_seed);
        save_oracle_checkpoint(opts->oracle_out, oracle);
        write_sessions_csv(opts->demos_out, demos);
        write_resolved_config(*sub, opts->demos_out);
        io.out << "oracle checkpoint: " << opts->oracle_out << "\n"
               << "demo sessions: " << opts->demos_out << " (" << opts->n_demos
               << " sequences, V=" << opts->vocab_size << ", T=" << opts->horizon << ")\n";
    });
}

void register_pretrain(CLI::App& app, Io io) {
    struct Opts {
        DataOpts data;
        GeneratorOpts gen;
        int epochs = 5;
        double lr = 0.5;
        std::uint64_t seed = 1;
        std::string gen_out = "generator.json";
        std::string history_out;
    };
    auto opts = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand(
        "pretrain", "Maximum-likelihood pretraining of a generator on demo sessions");
    sub->fallthrough();
    add_data_options(*sub, opts->data);
    add_generator_options(*sub, opts->gen);
    sub->add_option("--epochs", opts->epochs, "full-batch ascent epochs")->capture_default_str();
    sub->add_option("--lr", opts->lr, "initial step size (halved when a step would hurt)")
        ->capture_default_str();
    sub->add_option("--seed", opts->seed, "master seed (recurrent weight init derives from it)")
        ->capture_default_str();
    sub->add_option("--gen-out", opts->gen_out, "generator checkpoint path")
        ->capture_default_str();
    sub->add_option("--history-out", opts->history_out,
                    "optional CSV of per-epoch demo NLL (epoch,demo_nll)");

    sub->callback([opts, sub, io] {
        const DemoSet demos = load_demo_windows(opts->data);
        Rng master(opts->seed);
        const std::uint64_t init_seed = master.next_u64();
        const GeneratorModel init = build_generator(opts->gen, demos.vocab.size(), init_seed);
        const PretrainResult result = pretrain_mle(init, demos, opts->epochs, opts->lr);
        save_generator_checkpoint(opts->gen_out, result.model, demos.vocab, opts->seed);
        if (!opts->history_out.empty()) {
            std::ostringstream csv;
            csv << "epoch,demo_nll\n";
            for (std::size_t i = 0; i < result.nll_per_epoch.size(); ++i) {
                csv << (i + 1) << ',' << fmt_full(result.nll_per_epoch[i]) << '\n';
            }
            atomic_write_text(opts->history_out, csv.str());
        }
        write_resolved_config(*sub, opts->gen_out);
        io.out << "generator checkpoint: " << opts->gen_out << "\n";
        if (!result.nll_per_epoch.empty()) {
            io.out << "final demo NLL: " << fmt(result.nll_per_epoch.back()) << " nats\n";
        }
    });
}

void register_train_gan(CLI::App& app, Io io) {
    struct Opts {
        DataOpts data;
        GeneratorOpts gen;
        std::string energy_kind = "linear";
        int energy_embed_dim = 8;
        int energy_hidden_dim = 16;
        GanConfig config;
        std::uint64_t seed = 1;
        std::string oracle_path;
        std::string gen_out = "generator.json";
        std::string energy_out = "energy.json";
        std::string metrics_out = "metrics.csv";
    };
    auto opts = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand(
        "train-gan", "Adversarial training: hinge discriminator vs entropy-regularized generator");
    sub->fallthrough();
    add_data_options(*sub, opts->data);
    add_generator_options(*sub, opts->gen);
    sub->add_option("--energy-kind", opts->energy_kind, "discriminator family")
        ->check(CLI::IsMember({"linear", "recurrent"}))
        ->capture_default_str();
    sub->add_option("--energy-embed-dim", opts->energy_embed_dim,
                    "embedding width of the recurrent energy")
        ->capture_default_str();
    sub->add_option("--energy-hidden-dim", opts->energy_hidden_dim,
                    "hidden width of the recurrent energy")
        ->capture_default_str();
    sub->add_option("--margin", opts->config.margin, "hinge margin m of the discriminator")
        ->required();
    sub->add_option("--lambda", opts->config.lambda_entropy,
                    "entropy-regularizer weight on the generator")
        ->capture_default_str();
    sub->add_option("--lr-g", opts->config.lr_g, "generator learning rate")->capture_default_str();
    sub->add_option("--lr-d", opts->config.lr_d, "discriminator learning rate")
        ->capture_default_str();
    sub->add_option("--batch-size", opts->config.batch_size, "sequences per update")
        ->capture_default_str();
    sub->add_option("--n-rollouts", opts->config.n_rollouts, "rollouts per prefix Q estimate")
        ->capture_default_str();
    sub->add_option("--d-steps", opts->config.d_steps, "discriminator updates per round")
        ->capture_default_str();
    sub->add_option("--g-steps", opts->config.g_steps, "generator updates per round")
        ->capture_default_str();
    sub->add_option("--rounds", opts->config.epochs, "adversarial rounds (one metric row each)")
        ->capture_default_str();
    sub->add_flag("--baseline", opts->config.baseline_enabled,
                  "subtract a running-mean baseline from the Q estimates");
    sub->add_option("--baseline-window", opts->config.baseline_window,
                    "running-mean window of the baseline, in Q estimates")
        ->capture_default_str();
    sub->add_option("--pretrain-epochs", opts->config.pretrain_epochs,
                    "MLE epochs before the adversarial phase")
        ->capture_default_str();
    sub->add_option("--pretrain-lr", opts->config.pretrain_lr, "MLE step size")
        ->capture_default_str();
    sub->add_option("--threads", opts->config.n_threads,
                    "worker threads for the generator batch (results identical for any value)")
        ->capture_default_str();
    sub->add_flag("--early-stop", opts->config.early_stop_enabled,
                  "stop when the feature gap plateaus");
    sub->add_option("--early-stop-min-improvement", opts->config.early_stop_min_improvement,
                    "feature-gap improvement that resets the patience counter")
        ->capture_default_str();
    sub->add_option("--early-stop-patience", opts->config.early_stop_patience,
                    "rounds without improvement before stopping")
        ->capture_default_str();
    sub->add_option("--seed", opts->seed,
                    "master seed; init and training streams derive from it")
        ->capture_default_str();
    sub->add_option("--oracle", opts->oracle_path,
                    "optional oracle checkpoint; adds the forward oracle NLL metric");
    sub->add_option("--gen-out", opts->gen_out, "generator checkpoint path")
        ->capture_default_str();
    sub->add_option("--energy-out", opts->energy_out, "energy checkpoint path")
        ->capture_default_str();
    sub->add_option("--metrics-out", opts->metrics_out, "metrics CSV path")
        ->capture_default_str();

    sub->callback([opts, sub, io] {
        const DemoSet demos = load_demo_windows(opts->data);
        opts->config.horizon = opts->data.horizon;
        Rng master(opts->seed);
        const std::uint64_t gen_init_seed = master.next_u64();
        const std::uint64_t energy_init_seed = master.next_u64();
        opts->config.seed = master.next_u64();

        GeneratorModel gen = build_generator(opts->gen, demos.vocab.size(), gen_init_seed);
        EnergyModel energy =
            opts->energy_kind == "linear"
                ? EnergyModel(make_linear_energy(demos.vocab.size()))
                : EnergyModel(make_recurrent_energy(demos.vocab.size(), opts->energy_embed_dim,
                                                    opts->energy_hidden_dim, energy_init_seed));
        std::optional<MarkovOracle> oracle;
        if (!opts->oracle_path.empty()) {
            oracle = remap_oracle(load_oracle_checkpoint(opts->oracle_path), demos.vocab);
        }

        const TrainState state = train(std::move(gen), std::move(energy), demos, opts->config,
                                       oracle ? &*oracle : nullptr);

        write_metrics_csv(opts->metrics_out, state.history);
        save_generator_checkpoint(opts->gen_out, state.gen, demos.vocab, opts->seed);
        save_energy_checkpoint(opts->energy_out, state.energy, demos.vocab, opts->seed);
        write_resolved_config(*sub, opts->metrics_out);

        io.out << "completed " << state.iteration << " rounds\n";
        if (!state.history.empty()) {
            const MetricRow& last = state.history.back();
            io.out << "final d_loss " << fmt(last.d_loss) << ", g_objective "
                   << fmt(last.g_objective) << ", entropy estimate "
                   << fmt(last.entropy_estimate);
            if (last.oracle_nll) {
                io.out << ", oracle NLL " << fmt(*last.oracle_nll) << " nats";
            }
            io.out << "\n";
        }
        io.out << "generator checkpoint: " << opts->gen_out << "\n"
               << "energy checkpoint: " << opts->energy_out << "\n"
               << "metrics: " << opts->metrics_out << "\n";
    });
}

void register_train_il(CLI::App& app, Io io) {
    struct Opts {
        DataOpts data;
        IlConfig config;
        std::string cost_out = "cost.json";
        std::string policy_out = "policy.json";
        std::string history_out = "il_history.csv";
    };
    auto opts = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand(
        "train-il",
        "Exact maximum-entropy imitation learning: alternate the closed-form policy step with "
        "cost ascent until the feature gap closes");
    sub->fallthrough();
    add_data_options(*sub, opts->data);
    sub->add_option("--rounds", opts->config.max_rounds, "maximum solver rounds")
        ->capture_default_str();
    sub->add_option("--step-size", opts->config.step_size,
                    "initial cost step (halved when a step would lower the demo likelihood)")
        ->capture_default_str();
    sub->add_option("--tolerance", opts->config.tolerance,
                    "stop when the L-inf feature gap drops below this")
        ->capture_default_str();
    sub->add_option("--cost-out", opts->cost_out, "learned cost checkpoint path")
        ->capture_default_str();
    sub->add_option("--policy-out", opts->policy_out, "exact policy checkpoint path")
        ->capture_default_str();
    sub->add_option("--history-out", opts->history_out,
                    "per-round CSV (round,feature_gap,demo_log_likelihood,step_size)")
        ->capture_default_str();

    sub->callback([opts, sub, io] {
        const DemoSet demos = load_demo_windows(opts->data);
        const TwoStepResult result = two_step_solve(demos, opts->config);
        save_energy_checkpoint(opts->cost_out, EnergyModel(result.cost), demos.vocab, 0);
        save_generator_checkpoint(opts->policy_out, GeneratorModel(result.policy), demos.vocab, 0);
        std::ostringstream csv;
        csv << "round,feature_gap,demo_log_likelihood,step_size\n";
        for (const IlRound& row : result.history) {
            csv << row.round << ',' << fmt_full(row.feature_gap) << ','
                << fmt_full(row.demo_log_likelihood) << ',' << fmt_full(row.step_size) << '\n';
        }
        atomic_write_text(opts->history_out, csv.str());
        write_resolved_config(*sub, opts->history_out);

        const IlRound& last = result.history.back();
        io.out << (result.converged ? "converged" : "stopped without converging") << " after "
               << result.history.size() << " rounds\n"
               << "final feature gap " << fmt(last.feature_gap) << ", demo log-likelihood "
               << fmt(last.demo_log_likelihood) << " nats\n"
               << "cost checkpoint: " << opts->cost_out << "\n"
               << "policy checkpoint: " << opts->policy_out << "\n"
               << "history: " << opts->history_out << "\n";
    });
}

void register_check_equivalence(CLI::App& app, Io io) {
    struct Opts {
        int vocab_size = 3;
        int horizon = 3;
        int n_demos = 6;
        int batch_size = 8;
        int instances = 20;
        double margin = 0.0;
        std::uint64_t seed = 1;
    };
    auto opts = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand(
        "check-equivalence",
        "Verify numerically that the adversarial updates coincide with the maximum-entropy "
        "imitation-learning updates on random tabular instances");
    sub->fallthrough();
    sub->add_option("--vocab-size", opts->vocab_size, "number of items V")->capture_default_str();
    sub->add_option("--horizon", opts->horizon, "sequence length T (instance must be enumerable)")
        ->capture_default_str();
    sub->add_option("--n-demos", opts->n_demos, "demo sequences per instance")
        ->capture_default_str();
    sub->add_option("--batch-size", opts->batch_size, "fake sequences per instance")
        ->capture_default_str();
    sub->add_option("--instances", opts->instances, "number of random instances")
        ->capture_default_str();
    CLI::Option* margin_opt =
        sub->add_option("--margin", opts->margin,
                        "hinge margin; default derives max fake energy + 1 per instance, which "
                        "keeps the hinge active on the whole fake batch");
    sub->add_option("--seed", opts->seed, "master seed; per-instance seeds derive from it")
        ->capture_default_str();

    sub->callback([opts, margin_opt, io] {
        int failures = 0;
        Rng master(opts->seed);
        for (int i = 0; i < opts->instances; ++i) {
            const std::uint64_t oracle_seed = master.next_u64();
            const std::uint64_t demo_seed = master.next_u64();
            const std::uint64_t gen_seed = master.next_u64();
            const std::uint64_t energy_seed = master.next_u64();
            const std::uint64_t fake_seed = master.next_u64();

            const MarkovOracle oracle = make_markov_oracle(opts->vocab_size, oracle_seed, 1.0);
            const DemoSet demos =
                sample_demos(oracle, opts->n_demos, opts->horizon, demo_seed);

            GeneratorModel gen_model = make_tabular_generator(opts->vocab_size, 1);
            Vector gen_params(param_count(gen_model));
            Rng gen_rng(gen_seed);
            for (double& p : gen_params) {
                p = 0.5 * gen_rng.normal();
            }
            set_params(gen_model, gen_params);

            EnergyModel energy_model = make_linear_energy(opts->vocab_size);
            Vector energy_params(param_count(energy_model));
            Rng energy_rng(energy_seed);
            for (double& p : energy_params) {
                p = energy_rng.uniform(-1.0, 1.0);
            }
            set_params(energy_model, energy_params);

            Rng fake_rng(fake_seed);
            std::vector<Sequence> fake_batch;
            fake_batch.reserve(static_cast<std::size_t>(opts->batch_size));
            for (int b = 0; b < opts->batch_size; ++b) {
                fake_batch.push_back(sample_sequence(gen_model, opts->horizon, fake_rng).items);
            }
            double margin = opts->margin;
            if (margin_opt->count() == 0) {
                double max_energy = 0.0;
                for (std::size_t b = 0; b < fake_batch.size(); ++b) {
                    const double v = energy(energy_model, fake_batch[b]);
                    max_energy = b == 0 ? v : std::max(max_energy, v);
                }
                margin = max_energy + 1.0;
            }

            const EquivalenceReport report = gan_il_equivalence_check(
                std::get<TabularGenerator>(gen_model), std::get<LinearEnergy>(energy_model),
                demos, margin, fake_batch);

            io.out << "instance " << i << ": step diff " << fmt(report.max_abs_step_difference)
                   << ", grad diff " << fmt(report.max_abs_generator_grad_difference)
                   << ", dropped-term diff " << fmt(report.max_abs_dropped_term_difference)
                   << (report.pass ? "  pass" : "  FAIL") << "\n";
            if (!report.pass) {
                ++failures;
            }
        }
        if (failures > 0) {
            throw std::runtime_error(std::to_string(failures) + " of " +
                                     std::to_string(opts->instances) +
                                     " equivalence instances exceeded tolerance");
        }
        io.out << "all " << opts->instances << " instances passed\n";
    });
}

void register_eval(CLI::App& app, Io io) {
    struct Opts {
        std::string gen_path;
        DataOpts data;
        std::string oracle_path;
        int k = 5;
        int mc_samples = 4096;
        std::uint64_t seed = 1;
    };
    auto opts = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand(
        "eval", "Score a generator checkpoint against held-out sessions and, optionally, the "
                "ground-truth oracle");
    sub->fallthrough();
    sub->add_option("--gen", opts->gen_path, "generator checkpoint")->required();
    add_data_options(*sub, opts->data);
    sub->add_option("--oracle", opts->oracle_path,
                    "optional oracle checkpoint; adds NLLs in both directions");
    CLI::Option* k_opt = sub->add_option("--k", opts->k,
                                         "list length of the hit@k metric (default caps at V)")
                             ->capture_default_str();
    sub->add_option("--mc-samples", opts->mc_samples,
                    "samples when an exact chain computation is unavailable")
        ->capture_default_str();
    sub->add_option("--seed", opts->seed, "seed for the sampled fallbacks")
        ->capture_default_str();

    sub->callback([opts, k_opt, io] {
        const LoadedGenerator loaded = load_generator_checkpoint(opts->gen_path);
        const DemoSet heldout = remap_demos(load_demo_windows(opts->data), loaded.vocab);
        Rng master(opts->seed);
        const bool exact = exact_chain_supported(loaded.model);
        const int k =
            k_opt->count() > 0 ? opts->k : std::min(opts->k, loaded.vocab.size());

        const double hit_rate = hit_at_k(loaded.model, heldout, k);
        io.out << "hit@" << k << ": " << fmt(hit_rate) << "\n";

        double gap = 0.0;
        if (exact) {
            gap = feature_gap(std::get<TabularGenerator>(loaded.model), heldout);
        } else {
            Rng sample_rng(master.next_u64());
            std::vector<Sequence> batch;
            batch.reserve(static_cast<std::size_t>(opts->mc_samples));
            for (int i = 0; i < opts->mc_samples; ++i) {
                batch.push_back(sample_sequence(loaded.model, heldout.horizon, sample_rng).items);
            }
            gap = feature_gap(batch_feature_mean(batch, loaded.vocab.size()),
                              heldout.feature_mean);
        }
        io.out << "feature_gap: " << fmt(gap) << (exact ? " (exact)" : " (sampled)") << "\n";

        if (!opts->oracle_path.empty()) {
            const MarkovOracle oracle =
                remap_oracle(load_oracle_checkpoint(opts->oracle_path), loaded.vocab);
            const NllMode mode = exact ? NllMode::exact : NllMode::mc;
            const double forward =
                oracle_nll(loaded.model, oracle, heldout.horizon, NllDirection::forward, mode,
                           opts->mc_samples, master.next_u64());
            const double reverse =
                oracle_nll(loaded.model, oracle, heldout.horizon, NllDirection::reverse, mode,
                           opts->mc_samples, master.next_u64());
            io.out << "oracle_nll_forward: " << fmt(forward) << " nats\n"
                   << "oracle_nll_reverse: " << fmt(reverse) << " nats\n";
        }
    });
}

void register_recommend(CLI::App& app, Io io) {
    struct Opts {
        std::string gen_path;
        std::string prefix;
        int k = 5;
    };
    auto opts = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand(
        "recommend", "Top-k next items for a prefix of item tokens (flag or one stdin line)");
    sub->fallthrough();
    sub->add_option("--gen", opts->gen_path, "generator checkpoint")->required();
    CLI::Option* prefix_opt = sub->add_option(
        "--prefix", opts->prefix,
        "comma-separated item tokens; empty string scores the initial distribution");
    sub->add_option("--k", opts->k, "list length")->capture_default_str();

    sub->callback([opts, prefix_opt, io] {
        const LoadedGenerator loaded = load_generator_checkpoint(opts->gen_path);
        std::string text = opts->prefix;
        if (prefix_opt->count() == 0) {
            std::getline(io.in, text);
        }
        if (!text.empty() && text.back() == '\r') {
            text.pop_back();
        }
        std::vector<ItemId> prefix;
        if (!text.empty()) {
            std::size_t start = 0;
            while (true) {
                const std::size_t comma = text.find(',', start);
                const std::string token = text.substr(
                    start, comma == std::string::npos ? std::string::npos : comma - start);
                if (!loaded.vocab.contains(token)) {
                    throw std::runtime_error("unknown token \"" + token +
                                             "\": the checkpoint vocabulary has no such item");
                }
                prefix.push_back(loaded.vocab.id(token));
                if (comma == std::string::npos) {
                    break;
                }
                start = comma + 1;
            }
        }
        const auto ranked = recommend_topk(loaded.model, prefix, opts->k);
        for (const auto& [item, prob] : ranked) {
            io.out << loaded.vocab.token(item) << " " << fmt(prob) << "\n";
        }
    });
}

void register_generate(CLI::App& app, Io io) {
    struct Opts {
        std::string gen_path;
        int n = 10;
        int horizon = 8;
        std::uint64_t seed = 1;
    };
    auto opts = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand(
        "generate", "Sample sequences from a generator checkpoint, one per line");
    sub->fallthrough();
    sub->add_option("--gen", opts->gen_path, "generator checkpoint")->required();
    sub->add_option("--n", opts->n, "number of sequences")->capture_default_str();
    CLI::Option* horizon_opt =
        sub->add_option("--horizon", opts->horizon, "sequence length T")->capture_default_str();
    sub->add_option("--seed", opts->seed, "sampling seed")->capture_default_str();

    sub->callback([opts, horizon_opt, io] {
        const LoadedGenerator loaded = load_generator_checkpoint(opts->gen_path);
        int horizon = opts->horizon;
        if (const auto* tab = std::get_if<TabularGenerator>(&loaded.model);
            tab != nullptr && !tab->stationary) {
            if (horizon_opt->count() > 0 && opts->horizon != tab->horizon) {
                throw std::runtime_error(
                    "this checkpoint generates fixed-length sequences of " +
                    std::to_string(tab->horizon) + " items; omit --horizon or pass that value");
            }
            horizon = tab->horizon;
        }
        Rng rng(opts->seed);
        for (int i = 0; i < opts->n; ++i) {
            const SampleResult sample = sample_sequence(loaded.model, horizon, rng);
            for (std::size_t t = 0; t < sample.items.size(); ++t) {
                io.out << (t == 0 ? "" : " ") << loaded.vocab.token(sample.items[t]);
            }
            io.out << "\n";
        }
    });
}

}  // namespace

int run_cli(std::vector<std::string> args, std::istream& in, std::ostream& out,
            std::ostream& err) {
    CLI::App app{
        "Energy-based sequence GAN training for next-item recommendation, an exact "
        "maximum-entropy imitation-learning solver, and the numerical checks that the two "
        "coincide."};
    app.name("ebsg");
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "key=value config file with a [subcommand] section; command-line flags take "
                   "precedence over file values");
    app.allow_config_extras(false);

    const Io io{in, out, err};
    register_make_synthetic(app, io);
    register_pretrain(app, io);
    register_train_gan(app, io);
    register_train_il(app, io);
    register_check_equivalence(app, io);
    register_eval(app, io);
    register_recommend(app, io);
    register_generate(app, io);

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        const std::vector<CLI::App*> parsed = app.get_subcommands();
        out << (parsed.empty() ? app.help() : parsed.front()->help());
        return e.get_exit_code();
    } catch (const CLI::RequiredError& e) {
        // A stray token eats the "subcommand required" slot; name it instead of
        // parroting the generic message.
        const std::vector<std::string> extras = app.remaining();
        if (extras.empty()) {
            err << "error: " << e.what() << "\n\n" << app.help();
        } else if (extras.front().rfind('-', 0) == 0) {
            err << "error: unrecognized option \"" << extras.front() << "\"\n\n" << app.help();
        } else {
            err << "error: unknown subcommand \"" << extras.front() << "\"\n\n" << app.help();
        }
        return e.get_exit_code() == 0 ? 1 : e.get_exit_code();
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return e.get_exit_code() == 0 ? 1 : e.get_exit_code();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace ebsg::cli
