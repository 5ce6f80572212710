#include "ebsg/maxent.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "ebsg/errors.hpp"

namespace ebsg {

namespace {

constexpr std::int64_t kEnumerationLimit = 1'000'000;
constexpr int kMaxStepHalvings = 80;

std::int64_t sequence_count(int vocab_size, int horizon) {
    std::int64_t n = 1;
    for (int t = 0; t < horizon; ++t) {
        n *= vocab_size;
        if (n > kEnumerationLimit) {
            throw EnumerationLimitError("instance too large to enumerate: " +
                                        std::to_string(vocab_size) + "^" +
                                        std::to_string(horizon) + " sequences exceeds " +
                                        std::to_string(kEnumerationLimit));
        }
    }
    return n;
}

void require_order1_chain(const TabularGenerator& q, int horizon) {
    if (q.order != 1) {
        throw std::invalid_argument("chain computation requires an order-1 tabular policy, got "
                                    "order " +
                                    std::to_string(q.order));
    }
    if (!q.stationary && q.horizon < horizon) {
        throw std::invalid_argument("non-stationary policy horizon " + std::to_string(q.horizon) +
                                    " is shorter than requested horizon " +
                                    std::to_string(horizon));
    }
    if (horizon < 1) {
        throw std::invalid_argument("chain computation requires horizon >= 1");
    }
}

/// Logit row governing the item at `position` given the previous item.
std::span<const double> step_logits(const TabularGenerator& q, int position, int prev) {
    if (q.stationary) {
        return position == 0 ? q.tables[0].row(0) : q.tables[1].row(prev);
    }
    return q.tables[static_cast<std::size_t>(position)].row(position == 0 ? 0 : prev);
}

Vector log_softmax_of(std::span<const double> logits) {
    const double lse = log_sum_exp(logits);
    Vector out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = logits[i] - lse;
    }
    return out;
}

/// Backward soft values and the induced conditionals (no feature pass).
DpDistribution dp_core(const LinearEnergy& cost, int horizon) {
    if (horizon < 1) {
        throw std::invalid_argument("partition dp: horizon must be >= 1");
    }
    if (!all_finite(cost.init_cost) || !all_finite(cost.trans_cost.data())) {
        throw std::invalid_argument("partition dp: non-finite cost parameter");
    }
    const int V = cost.vocab_size;
    DpDistribution dist;
    dist.vocab_size = V;
    dist.horizon = horizon;
    dist.soft_values.assign(static_cast<std::size_t>(horizon),
                            Vector(static_cast<std::size_t>(V), 0.0));

    // W[T-1] = 0; W[t][a] = lse_b(-cost(a,b) + W[t+1][b]).
    for (int t = horizon - 2; t >= 0; --t) {
        const Vector& next = dist.soft_values[static_cast<std::size_t>(t) + 1];
        Vector& cur = dist.soft_values[static_cast<std::size_t>(t)];
        Vector scratch(static_cast<std::size_t>(V));
        for (int a = 0; a < V; ++a) {
            for (int b = 0; b < V; ++b) {
                scratch[static_cast<std::size_t>(b)] =
                    -cost.trans_cost(a, b) + next[static_cast<std::size_t>(b)];
            }
            cur[static_cast<std::size_t>(a)] = log_sum_exp(scratch);
        }
    }
    {
        Vector scratch(static_cast<std::size_t>(V));
        for (int a = 0; a < V; ++a) {
            scratch[static_cast<std::size_t>(a)] =
                -cost.init_cost[static_cast<std::size_t>(a)] +
                dist.soft_values[0][static_cast<std::size_t>(a)];
        }
        dist.log_z = log_sum_exp(scratch);
    }

    dist.policy = make_tabular_generator(V, 1, horizon);
    for (int a = 0; a < V; ++a) {
        dist.policy.tables[0](0, a) = -cost.init_cost[static_cast<std::size_t>(a)] +
                                      dist.soft_values[0][static_cast<std::size_t>(a)] -
                                      dist.log_z;
    }
    for (int t = 1; t < horizon; ++t) {
        const Vector& w_here = dist.soft_values[static_cast<std::size_t>(t)];
        const Vector& w_prev = dist.soft_values[static_cast<std::size_t>(t) - 1];
        Matrix& table = dist.policy.tables[static_cast<std::size_t>(t)];
        for (int a = 0; a < V; ++a) {
            for (int b = 0; b < V; ++b) {
                table(a, b) = -cost.trans_cost(a, b) + w_here[static_cast<std::size_t>(b)] -
                              w_prev[static_cast<std::size_t>(a)];
            }
        }
    }
    return dist;
}

Vector cost_params(const LinearEnergy& cost) {
    EnergyModel as_model = cost;
    return param_vector(as_model);
}

}  // namespace

double log_z(const ExactDistribution& dist) {
    return std::visit([](const auto& d) { return d.log_z; }, dist);
}

int distribution_horizon(const ExactDistribution& dist) {
    return std::visit([](const auto& d) { return d.horizon; }, dist);
}

double sequence_log_prob(const ExactDistribution& dist, std::span<const ItemId> seq) {
    if (const auto* en = std::get_if<EnumeratedDistribution>(&dist)) {
        validate_sequence(seq, en->vocab_size, en->horizon);
        std::size_t index = 0;
        for (ItemId id : seq) {
            index = index * static_cast<std::size_t>(en->vocab_size) + static_cast<std::size_t>(id);
        }
        return std::log(en->probabilities[index]);
    }
    const auto& dp = std::get<DpDistribution>(dist);
    validate_sequence(seq, dp.vocab_size, dp.horizon);
    double total = 0.0;
    for (int t = 0; t < dp.horizon; ++t) {
        auto logits = step_logits(dp.policy, t, t == 0 ? 0 : seq[static_cast<std::size_t>(t) - 1]);
        total += logits[static_cast<std::size_t>(seq[static_cast<std::size_t>(t)])] -
                 log_sum_exp(logits);
    }
    return total;
}

std::vector<Sequence> enumerate_all_sequences(int vocab_size, int horizon) {
    if (vocab_size < 1 || horizon < 1) {
        throw std::invalid_argument("enumerate_all_sequences: need vocab_size and horizon >= 1");
    }
    const std::int64_t n = sequence_count(vocab_size, horizon);
    std::vector<Sequence> out;
    out.reserve(static_cast<std::size_t>(n));
    Sequence current(static_cast<std::size_t>(horizon), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        out.push_back(current);
        // Lexicographic odometer increment.
        for (int t = horizon - 1; t >= 0; --t) {
            if (++current[static_cast<std::size_t>(t)] < vocab_size) {
                break;
            }
            current[static_cast<std::size_t>(t)] = 0;
        }
    }
    return out;
}

EnumeratedDistribution enumerate_distribution(const LinearEnergy& cost, int horizon) {
    EnumeratedDistribution dist;
    dist.vocab_size = cost.vocab_size;
    dist.horizon = horizon;
    dist.sequences = enumerate_all_sequences(cost.vocab_size, horizon);

    const EnergyModel as_model = cost;
    Vector neg_energy(dist.sequences.size());
    for (std::size_t i = 0; i < dist.sequences.size(); ++i) {
        neg_energy[i] = -energy(as_model, dist.sequences[i]);
    }
    dist.log_z = log_sum_exp(neg_energy);
    dist.probabilities.resize(neg_energy.size());
    for (std::size_t i = 0; i < neg_energy.size(); ++i) {
        dist.probabilities[i] = std::exp(neg_energy[i] - dist.log_z);
    }
    return dist;
}

PartitionResult partition_dp(const LinearEnergy& cost, int horizon) {
    PartitionResult result;
    result.dist = dp_core(cost, horizon);
    result.feature_expectation = expected_features(result.dist.policy, horizon);
    return result;
}

TabularGenerator soft_dp_policy(const LinearEnergy& cost, int horizon) {
    return dp_core(cost, horizon).policy;
}

Matrix state_marginals(const TabularGenerator& q, int horizon) {
    require_order1_chain(q, horizon);
    const int V = q.vocab_size;
    Matrix mu(horizon, V, 0.0);
    Vector p0 = softmax(step_logits(q, 0, 0));
    for (int v = 0; v < V; ++v) {
        mu(0, v) = p0[static_cast<std::size_t>(v)];
    }
    for (int t = 1; t < horizon; ++t) {
        for (int a = 0; a < V; ++a) {
            const double w = mu(t - 1, a);
            if (w == 0.0) {
                continue;
            }
            Vector pa = softmax(step_logits(q, t, a));
            for (int b = 0; b < V; ++b) {
                mu(t, b) += w * pa[static_cast<std::size_t>(b)];
            }
        }
    }
    return mu;
}

Vector expected_features(const TabularGenerator& q, int horizon) {
    require_order1_chain(q, horizon);
    const int V = q.vocab_size;
    const auto sV = static_cast<std::size_t>(V);
    Vector f(feature_dim(V), 0.0);
    const Matrix mu = state_marginals(q, horizon);
    for (int v = 0; v < V; ++v) {
        f[static_cast<std::size_t>(v)] = mu(0, v);
    }
    for (int t = 1; t < horizon; ++t) {
        for (int a = 0; a < V; ++a) {
            const double w = mu(t - 1, a);
            if (w == 0.0) {
                continue;
            }
            Vector pa = softmax(step_logits(q, t, a));
            for (int b = 0; b < V; ++b) {
                f[sV + static_cast<std::size_t>(a) * sV + static_cast<std::size_t>(b)] +=
                    w * pa[static_cast<std::size_t>(b)];
            }
        }
    }
    return f;
}

double chain_cross_entropy(const TabularGenerator& p, const TabularGenerator& q, int horizon) {
    require_order1_chain(p, horizon);
    require_order1_chain(q, horizon);
    if (p.vocab_size != q.vocab_size) {
        throw std::invalid_argument("chain_cross_entropy: vocabulary sizes differ");
    }
    const int V = p.vocab_size;
    const Matrix mu = state_marginals(p, horizon);

    double ce = 0.0;
    {
        Vector pp = softmax(step_logits(p, 0, 0));
        Vector lq = log_softmax_of(step_logits(q, 0, 0));
        for (int v = 0; v < V; ++v) {
            ce -= pp[static_cast<std::size_t>(v)] * lq[static_cast<std::size_t>(v)];
        }
    }
    for (int t = 1; t < horizon; ++t) {
        for (int a = 0; a < V; ++a) {
            const double w = mu(t - 1, a);
            if (w == 0.0) {
                continue;
            }
            Vector pp = softmax(step_logits(p, t, a));
            Vector lq = log_softmax_of(step_logits(q, t, a));
            for (int b = 0; b < V; ++b) {
                ce -= w * pp[static_cast<std::size_t>(b)] * lq[static_cast<std::size_t>(b)];
            }
        }
    }
    return ce;
}

double sequence_entropy(const TabularGenerator& q, int horizon) {
    return chain_cross_entropy(q, q, horizon);
}

double expected_energy(const TabularGenerator& q, const LinearEnergy& cost, int horizon) {
    if (q.vocab_size != cost.vocab_size) {
        throw std::invalid_argument("expected_energy: vocabulary sizes differ");
    }
    return dot(cost_params(cost), expected_features(q, horizon));
}

double kl_divergence(const TabularGenerator& q, const ExactDistribution& dist) {
    if (const auto* en = std::get_if<EnumeratedDistribution>(&dist)) {
        const GeneratorModel model = q;
        double kl = 0.0;
        for (std::size_t i = 0; i < en->sequences.size(); ++i) {
            const double lq = log_prob(model, en->sequences[i]);
            kl += std::exp(lq) * (lq - std::log(en->probabilities[i]));
        }
        return kl;
    }
    // Chain form: KL(q||P) = E_q[-log P] - H(q), both exact chain passes.
    const auto& dp = std::get<DpDistribution>(dist);
    const int horizon = dp.horizon;
    return chain_cross_entropy(q, dp.policy, horizon) - sequence_entropy(q, horizon);
}

Vector exact_ll_grad(const LinearEnergy& cost, const DemoSet& demos) {
    if (demos.sequences.empty()) {
        throw std::invalid_argument("exact_ll_grad: empty demonstration set");
    }
    return exact_ll_grad(cost, demos.feature_mean, demos.horizon);
}

Vector exact_ll_grad(const LinearEnergy& cost, std::span<const double> demo_feature_mean,
                     int horizon) {
    if (demo_feature_mean.size() != feature_dim(cost.vocab_size)) {
        throw std::invalid_argument("exact_ll_grad: feature mean has wrong dimension");
    }
    Vector grad = partition_dp(cost, horizon).feature_expectation;
    add_scaled(grad, demo_feature_mean, -1.0);
    return grad;
}

double demo_log_likelihood(const LinearEnergy& cost, const DemoSet& demos) {
    if (demos.sequences.empty()) {
        throw std::invalid_argument("demo_log_likelihood: empty demonstration set");
    }
    return demo_log_likelihood(cost, demos.feature_mean, demos.horizon);
}

double demo_log_likelihood(const LinearEnergy& cost, std::span<const double> demo_feature_mean,
                           int horizon) {
    if (demo_feature_mean.size() != feature_dim(cost.vocab_size)) {
        throw std::invalid_argument("demo_log_likelihood: feature mean has wrong dimension");
    }
    return -dot(cost_params(cost), demo_feature_mean) - dp_core(cost, horizon).log_z;
}

TwoStepResult two_step_solve(const DemoSet& demos, const IlConfig& config) {
    if (demos.sequences.empty()) {
        throw std::invalid_argument("two_step_solve: empty demonstration set");
    }
    return two_step_solve(demos.feature_mean, demos.vocab.size(), demos.horizon, config);
}

TwoStepResult two_step_solve(std::span<const double> demo_feature_mean, int vocab_size,
                             int horizon, const IlConfig& config) {
    if (vocab_size < 2 || horizon < 1) {
        throw std::invalid_argument("two_step_solve: need vocab_size >= 2 and horizon >= 1");
    }
    if (demo_feature_mean.size() != feature_dim(vocab_size)) {
        throw std::invalid_argument("two_step_solve: feature mean has wrong dimension");
    }
    if (config.max_rounds < 1 || config.step_size < 0.0 || !(config.tolerance > 0.0)) {
        throw std::invalid_argument("two_step_solve: invalid config");
    }

    TwoStepResult result;
    result.cost = make_linear_energy(vocab_size);
    double step = config.step_size;

    for (int round = 0; round < config.max_rounds; ++round) {
        const PartitionResult pr = partition_dp(result.cost, horizon);
        // Ascent direction of -E_demo[cost] + E_q[cost]; with the exact
        // q-step this is exactly the demo log-likelihood gradient.
        Vector grad = pr.feature_expectation;
        add_scaled(grad, demo_feature_mean, -1.0);
        double gap = 0.0;
        for (double g : grad) {
            gap = std::max(gap, std::abs(g));
        }
        const double ll =
            -dot(cost_params(result.cost), demo_feature_mean) - pr.dist.log_z;

        if (gap < config.tolerance) {
            result.history.push_back({round, gap, ll, 0.0});
            result.converged = true;
            break;
        }

        double used = 0.0;
        if (step > 0.0) {
            for (int tries = 0; tries < kMaxStepHalvings; ++tries) {
                EnergyModel candidate = result.cost;
                add_scaled_params(candidate, grad, step);
                const auto& cand = std::get<LinearEnergy>(candidate);
                if (!all_finite(cand.init_cost) || !all_finite(cand.trans_cost.data())) {
                    throw TrainDivergedError("two_step_solve: non-finite cost parameters");
                }
                const double cand_ll = demo_log_likelihood(cand, demo_feature_mean, horizon);
                if (cand_ll >= ll) {
                    result.cost = cand;
                    used = step;
                    if (tries == 0) {
                        step = std::min(step * 2.0, config.step_size);
                    }
                    break;
                }
                step /= 2.0;
            }
        }
        result.history.push_back({round, gap, ll, used});
    }

    result.policy = soft_dp_policy(result.cost, horizon);
    return result;
}

}  // namespace ebsg
