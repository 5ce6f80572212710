#include "ebsg/gan.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

#include "ebsg/errors.hpp"

namespace ebsg {

namespace {

constexpr int kMaxStepHalvings = 80;
constexpr int kMcNllSamples = 512;  ///< oracle-NLL sample count for non-tabular generators

/// Runs fn(0..n-1), strided across up to n_threads workers. Serial when
/// n_threads == 1. The first exception thrown by any worker is rethrown.
void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
    const int workers = std::min(n_threads, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::mutex error_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = w; i < n; i += workers) {
                    fn(i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

/// Running mean over the last `window` pushed values.
class RollingMean {
  public:
    explicit RollingMean(int window) : window_(window) {}

    double value() const { return values_.empty() ? 0.0 : sum_ / static_cast<double>(values_.size()); }

    void push(double v) {
        values_.push_back(v);
        sum_ += v;
        if (static_cast<int>(values_.size()) > window_) {
            sum_ -= values_.front();
            values_.pop_front();
        }
    }

  private:
    int window_;
    std::deque<double> values_;
    double sum_ = 0.0;
};

double mean_demo_nll(const GeneratorModel& gen, const DemoSet& demos) {
    double total = 0.0;
    for (const Sequence& s : demos.sequences) {
        total -= log_prob(gen, s);
    }
    return total / static_cast<double>(demos.sequences.size());
}

}  // namespace

void GanConfig::validate() const {
    if (!std::isfinite(margin)) {
        throw std::invalid_argument("GanConfig: margin must be finite");
    }
    if (!(lambda_entropy >= 0.0) || !std::isfinite(lambda_entropy)) {
        throw std::invalid_argument("GanConfig: lambda_entropy must be >= 0");
    }
    if (!(lr_g >= 0.0) || !std::isfinite(lr_g)) {
        throw std::invalid_argument("GanConfig: lr_g must be >= 0");
    }
    if (!(lr_d >= 0.0) || !std::isfinite(lr_d)) {
        throw std::invalid_argument("GanConfig: lr_d must be >= 0");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("GanConfig: batch_size must be >= 1");
    }
    if (n_rollouts < 1) {
        throw std::invalid_argument("GanConfig: n_rollouts must be >= 1");
    }
    if (d_steps < 1 || g_steps < 1) {
        throw std::invalid_argument("GanConfig: d_steps and g_steps must be >= 1");
    }
    if (epochs < 0) {
        throw std::invalid_argument("GanConfig: epochs must be >= 0");
    }
    if (baseline_window < 1) {
        throw std::invalid_argument("GanConfig: baseline_window must be >= 1");
    }
    if (pretrain_epochs < 0) {
        throw std::invalid_argument("GanConfig: pretrain_epochs must be >= 0");
    }
    if (!(pretrain_lr >= 0.0) || !std::isfinite(pretrain_lr)) {
        throw std::invalid_argument("GanConfig: pretrain_lr must be >= 0");
    }
    if (horizon < 1) {
        throw std::invalid_argument("GanConfig: horizon must be >= 1");
    }
    if (n_threads < 1) {
        throw std::invalid_argument("GanConfig: n_threads must be >= 1");
    }
    if (early_stop_patience < 1) {
        throw std::invalid_argument("GanConfig: early_stop_patience must be >= 1");
    }
    if (!(early_stop_min_improvement >= 0.0)) {
        throw std::invalid_argument("GanConfig: early_stop_min_improvement must be >= 0");
    }
}

double hinge(double margin, double energy_value) {
    if (!std::isfinite(margin) || !std::isfinite(energy_value)) {
        throw std::invalid_argument("hinge: arguments must be finite");
    }
    return std::max(margin - energy_value, 0.0);
}

double discriminator_loss(const EnergyModel& e, const std::vector<Sequence>& real_batch,
                          const std::vector<Sequence>& fake_batch, double margin) {
    if (real_batch.empty() || fake_batch.empty()) {
        throw std::invalid_argument("discriminator_loss: batches must be non-empty");
    }
    double real_sum = 0.0;
    for (const Sequence& s : real_batch) {
        real_sum += energy(e, s);
    }
    double fake_sum = 0.0;
    for (const Sequence& s : fake_batch) {
        fake_sum += hinge(margin, energy(e, s));
    }
    return real_sum / static_cast<double>(real_batch.size()) +
           fake_sum / static_cast<double>(fake_batch.size());
}

Vector discriminator_grad(const EnergyModel& e, const std::vector<Sequence>& real_batch,
                          const std::vector<Sequence>& fake_batch, double margin) {
    if (real_batch.empty() || fake_batch.empty()) {
        throw std::invalid_argument("discriminator_grad: batches must be non-empty");
    }
    // Real and fake contributions are summed separately in batch order and
    // combined once, so identical batches below the margin cancel exactly.
    Vector real_sum(param_count(e), 0.0);
    for (const Sequence& s : real_batch) {
        add_scaled(real_sum, grad_energy(e, s), 1.0);
    }
    Vector fake_sum(param_count(e), 0.0);
    for (const Sequence& s : fake_batch) {
        if (energy(e, s) < margin) {
            add_scaled(fake_sum, grad_energy(e, s), 1.0);
        }
    }
    Vector grad(param_count(e));
    const double nr = static_cast<double>(real_batch.size());
    const double nf = static_cast<double>(fake_batch.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] = real_sum[i] / nr - fake_sum[i] / nf;
    }
    return grad;
}

QEstimate estimate_Q(const GeneratorModel& gen, const EnergyModel& e,
                     std::span<const ItemId> prefix, int horizon, int n_rollouts,
                     double lambda_entropy, Rng& rng) {
    const int len = static_cast<int>(prefix.size());
    if (len < 1 || len > horizon) {
        throw std::invalid_argument("estimate_Q: prefix length must be in [1, horizon]");
    }
    if (n_rollouts < 1) {
        throw std::invalid_argument("estimate_Q: n_rollouts must be >= 1");
    }
    const double prefix_log_prob = log_prob(gen, prefix);
    if (len == horizon) {
        return {energy(e, prefix) + lambda_entropy * prefix_log_prob, 0};
    }
    double total = 0.0;
    for (int r = 0; r < n_rollouts; ++r) {
        Sequence s(prefix.begin(), prefix.end());
        double lp = prefix_log_prob;
        for (int t = len; t < horizon; ++t) {
            const Vector dist = next_step_dist(gen, s);
            const ItemId item = categorical_sample(dist, rng);
            lp += std::log(dist[static_cast<std::size_t>(item)]);
            s.push_back(item);
        }
        total += energy(e, s) + lambda_entropy * lp;
    }
    return {total / static_cast<double>(n_rollouts), n_rollouts};
}

Vector generator_grad(const GeneratorModel& gen, const EnergyModel& e, const GanConfig& config,
                      Rng& rng, GenBatchStats* stats) {
    config.validate();
    const int B = config.batch_size;
    const int T = config.horizon;

    // One child stream per sequence, forked up front: the parent stream
    // advances by exactly B draws whatever n_threads is, and each sequence's
    // draws are self-contained, so serial and parallel runs are bit-identical.
    std::vector<Rng> children;
    children.reserve(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i) {
        children.push_back(rng.fork());
    }

    std::vector<SampleResult> trajectories(static_cast<std::size_t>(B));
    std::vector<Vector> q_values(static_cast<std::size_t>(B));
    parallel_for(B, config.n_threads, [&](int i) {
        const auto si = static_cast<std::size_t>(i);
        trajectories[si] = sample_sequence(gen, T, children[si]);
        q_values[si] = Vector(static_cast<std::size_t>(T));
        for (int t = 1; t <= T; ++t) {
            const std::span<const ItemId> prefix(trajectories[si].items.data(),
                                                 static_cast<std::size_t>(t));
            q_values[si][static_cast<std::size_t>(t) - 1] =
                estimate_Q(gen, e, prefix, T, config.n_rollouts, config.lambda_entropy,
                           children[si])
                    .value;
        }
    });

    // Per-step weights: Q minus the running-mean baseline over estimates from
    // strictly earlier (sequence, step) pairs. The baseline depends only on
    // earlier prefixes and independent rollout draws, and the expected score
    // given a prefix is zero, so subtracting it leaves the estimator unbiased.
    std::vector<Vector> weights(static_cast<std::size_t>(B),
                                Vector(static_cast<std::size_t>(T), 0.0));
    RollingMean baseline(config.baseline_window);
    for (int i = 0; i < B; ++i) {
        for (int t = 0; t < T; ++t) {
            const double q = q_values[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
            if (config.baseline_enabled) {
                weights[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] =
                    q - baseline.value();
                baseline.push(q);
            } else {
                weights[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] = q;
            }
        }
    }

    std::vector<Vector> per_sequence(static_cast<std::size_t>(B));
    parallel_for(B, config.n_threads, [&](int i) {
        const auto si = static_cast<std::size_t>(i);
        per_sequence[si] = grad_log_prob_weighted(gen, trajectories[si].items, weights[si]);
    });

    // Reduce in sequence order so the sum is independent of thread count.
    Vector grad(param_count(gen), 0.0);
    for (int i = 0; i < B; ++i) {
        add_scaled(grad, per_sequence[static_cast<std::size_t>(i)], 1.0);
    }
    for (double& g : grad) {
        g /= static_cast<double>(B);
    }

    if (stats != nullptr) {
        std::vector<Sequence> batch;
        batch.reserve(static_cast<std::size_t>(B));
        double sum_energy = 0.0;
        double sum_log_prob = 0.0;
        for (int i = 0; i < B; ++i) {
            const auto si = static_cast<std::size_t>(i);
            sum_energy += energy(e, trajectories[si].items);
            double lp = 0.0;
            for (double step_lp : trajectories[si].step_log_probs) {
                lp += step_lp;
            }
            sum_log_prob += lp;
            batch.push_back(trajectories[si].items);
        }
        stats->mean_energy = sum_energy / static_cast<double>(B);
        stats->mean_log_prob = sum_log_prob / static_cast<double>(B);
        stats->mean_objective =
            stats->mean_energy + config.lambda_entropy * stats->mean_log_prob;
        stats->feature_mean = batch_feature_mean(batch, vocab_size(gen));
    }
    return grad;
}

PretrainResult pretrain_mle(const GeneratorModel& gen, const DemoSet& demos, int epochs,
                            double lr) {
    if (demos.sequences.empty()) {
        throw std::invalid_argument("pretrain_mle: empty demonstration set");
    }
    if (epochs < 0) {
        throw std::invalid_argument("pretrain_mle: epochs must be >= 0");
    }
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw std::invalid_argument("pretrain_mle: lr must be >= 0");
    }
    PretrainResult result{gen, {}};
    if (lr == 0.0) {
        // Contract: a zero step leaves the parameters bitwise untouched.
        const double nll = mean_demo_nll(result.model, demos);
        result.nll_per_epoch.assign(static_cast<std::size_t>(epochs), nll);
        return result;
    }

    double current_nll = mean_demo_nll(result.model, demos);
    double step = lr;
    const double n = static_cast<double>(demos.sequences.size());
    for (int epoch = 0; epoch < epochs; ++epoch) {
        Vector grad(param_count(result.model), 0.0);
        for (const Sequence& s : demos.sequences) {
            add_scaled(grad, grad_log_prob(result.model, s), 1.0);
        }
        for (double& g : grad) {
            g /= n;
        }
        for (int tries = 0; tries < kMaxStepHalvings; ++tries) {
            GeneratorModel candidate = result.model;
            add_scaled_params(candidate, grad, step);  // ascent on mean log-likelihood
            const double cand_nll = mean_demo_nll(candidate, demos);
            if (cand_nll <= current_nll) {
                result.model = std::move(candidate);
                current_nll = cand_nll;
                if (tries == 0) {
                    step = std::min(step * 2.0, lr);
                }
                break;
            }
            step /= 2.0;
        }
        result.nll_per_epoch.push_back(current_nll);
    }
    return result;
}

TrainState train(GeneratorModel gen, EnergyModel e, const DemoSet& demos, const GanConfig& config,
                 const MarkovOracle* oracle) {
    config.validate();
    if (demos.sequences.empty()) {
        throw std::invalid_argument("train: empty demonstration set");
    }
    if (vocab_size(gen) != demos.vocab.size() || vocab_size(e) != demos.vocab.size()) {
        throw std::invalid_argument("train: model and demo vocabulary sizes differ");
    }
    if (config.horizon != demos.horizon) {
        throw std::invalid_argument("train: config horizon " + std::to_string(config.horizon) +
                                    " does not match demo horizon " +
                                    std::to_string(demos.horizon));
    }
    if (oracle != nullptr && !(oracle->vocab == demos.vocab)) {
        throw std::invalid_argument("train: oracle vocabulary does not match the demos; remap it");
    }

    TrainState state{std::move(gen), std::move(e), 0, {}};
    Rng rng(config.seed);

    if (config.pretrain_epochs > 0) {
        state.gen =
            pretrain_mle(state.gen, demos, config.pretrain_epochs, config.pretrain_lr).model;
    }

    const auto check_finite = [](double value, const char* term, int round) {
        if (!std::isfinite(value)) {
            throw TrainDivergedError("training diverged: non-finite " + std::string(term) +
                                     " at round " + std::to_string(round));
        }
    };

    double best_gap = 0.0;
    int rounds_without_improvement = 0;

    for (int round = 0; round < config.epochs; ++round) {
        MetricRow row;
        row.iteration = round + 1;

        // Discriminator phase. Metrics keep the last step's batches.
        for (int ds = 0; ds < config.d_steps; ++ds) {
            std::vector<Sequence> real;
            real.reserve(static_cast<std::size_t>(config.batch_size));
            for (int i = 0; i < config.batch_size; ++i) {
                const auto idx = static_cast<std::size_t>(
                    rng.next_u64() % static_cast<std::uint64_t>(demos.sequences.size()));
                real.push_back(demos.sequences[idx]);
            }
            std::vector<Sequence> fake;
            fake.reserve(static_cast<std::size_t>(config.batch_size));
            for (int i = 0; i < config.batch_size; ++i) {
                fake.push_back(sample_sequence(state.gen, config.horizon, rng).items);
            }

            row.d_loss = discriminator_loss(state.energy, real, fake, config.margin);
            check_finite(row.d_loss, "d_loss", round);
            double real_sum = 0.0;
            for (const Sequence& s : real) {
                real_sum += energy(state.energy, s);
            }
            row.mean_real_energy = real_sum / static_cast<double>(real.size());

            if (config.lr_d > 0.0) {
                const Vector grad = discriminator_grad(state.energy, real, fake, config.margin);
                add_scaled_params(state.energy, grad, -config.lr_d);
            }
        }

        // Generator phase.
        for (int gs = 0; gs < config.g_steps; ++gs) {
            GenBatchStats stats;
            const Vector grad = generator_grad(state.gen, state.energy, config, rng, &stats);
            check_finite(stats.mean_objective, "g_objective", round);
            row.g_objective = stats.mean_objective;
            row.mean_fake_energy = stats.mean_energy;
            row.entropy_estimate = -stats.mean_log_prob;
            row.feature_gap = feature_gap(stats.feature_mean, demos.feature_mean);
            if (config.lr_g > 0.0) {
                add_scaled_params(state.gen, grad, -config.lr_g);
            }
        }

        if (oracle != nullptr) {
            const auto* tab = std::get_if<TabularGenerator>(&state.gen);
            if (tab != nullptr && tab->order == 1) {
                row.oracle_nll = oracle_nll(state.gen, *oracle, config.horizon,
                                            NllDirection::forward, NllMode::exact);
            } else {
                row.oracle_nll =
                    oracle_nll(state.gen, *oracle, config.horizon, NllDirection::forward,
                               NllMode::mc, kMcNllSamples, rng.next_u64());
            }
            check_finite(*row.oracle_nll, "oracle_nll", round);
        }

        state.history.push_back(row);
        state.iteration = round + 1;

        if (config.early_stop_enabled && row.feature_gap.has_value()) {
            const double gap = *row.feature_gap;
            if (round == 0 || gap < best_gap - config.early_stop_min_improvement) {
                best_gap = round == 0 ? gap : std::min(best_gap, gap);
                rounds_without_improvement = 0;
            } else {
                if (++rounds_without_improvement >= config.early_stop_patience) {
                    break;
                }
            }
        }
    }
    return state;
}

}  // namespace ebsg
