#include "ebsg/equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

#include "ebsg/gan.hpp"
#include "ebsg/maxent.hpp"

namespace ebsg {

namespace {

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

Vector elementwise_difference(std::span<const double> a, std::span<const double> b) {
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return out;
}

/// Descent direction on mean_real energy + mean_fake hinge, via the trainer's
/// own gradient.
Vector discriminator_descent_step(const EnergyModel& e, const std::vector<Sequence>& real,
                                  const std::vector<Sequence>& fake, double margin) {
    Vector step = discriminator_grad(e, real, fake, margin);
    for (double& v : step) {
        v = -v;
    }
    return step;
}

}  // namespace

EquivalenceReport gan_il_equivalence_check(const TabularGenerator& gen, const LinearEnergy& e,
                                           const DemoSet& demos, double margin,
                                           const std::vector<Sequence>& fake_batch) {
    if (gen.order != 1) {
        throw std::invalid_argument("gan_il_equivalence_check: generator must be order-1 tabular");
    }
    if (gen.vocab_size != e.vocab_size || gen.vocab_size != demos.vocab.size()) {
        throw std::invalid_argument("gan_il_equivalence_check: vocabulary sizes differ");
    }
    if (fake_batch.empty()) {
        throw std::invalid_argument("gan_il_equivalence_check: empty fake batch");
    }
    const int V = gen.vocab_size;
    const int T = demos.horizon;
    for (const Sequence& s : fake_batch) {
        validate_sequence(s, V, T);
    }

    EquivalenceReport report;
    report.margin = margin;
    const EnergyModel energy_model = e;

    report.fake_energies.reserve(fake_batch.size());
    for (const Sequence& s : fake_batch) {
        report.fake_energies.push_back(energy(energy_model, s));
    }
    const double max_fake = *std::max_element(report.fake_energies.begin(),
                                              report.fake_energies.end());
    const double min_fake = *std::min_element(report.fake_energies.begin(),
                                              report.fake_energies.end());
    report.margin_inactive = margin > max_fake;
    report.margin_saturating = min_fake - 1.0;
    report.fake_feature_mean = batch_feature_mean(fake_batch, V);

    // (a) The two update directions on the same demo set and fake batch.
    report.discriminator_step =
        discriminator_descent_step(energy_model, demos.sequences, fake_batch, margin);
    report.cost_step = elementwise_difference(report.fake_feature_mean, demos.feature_mean);
    report.step_difference =
        elementwise_difference(report.cost_step, report.discriminator_step);
    report.max_abs_step_difference = max_abs(report.step_difference);

    // (b) Exact generator gradient, two ways, over the whole sequence space.
    const GeneratorModel gen_model = gen;
    const std::vector<Sequence> all = enumerate_all_sequences(V, T);
    const std::size_t n = all.size();
    Vector probs(n);
    Vector values(n);  // energy(S) + log q(S), the entropy-regularized payoff
    for (std::size_t i = 0; i < n; ++i) {
        const double lq = log_prob(gen_model, all[i]);
        probs[i] = std::exp(lq);
        values[i] = energy(energy_model, all[i]) + lq;
    }

    // Conditional expectations of the payoff for every prefix.
    std::map<Sequence, std::pair<double, double>> prefix_sums;  // prefix -> (sum q*v, sum q)
    for (std::size_t i = 0; i < n; ++i) {
        Sequence prefix;
        prefix.reserve(all[i].size());
        for (ItemId item : all[i]) {
            prefix.push_back(item);
            auto& [num, den] = prefix_sums[prefix];
            num += probs[i] * values[i];
            den += probs[i];
        }
    }

    report.generator_grad_stepwise = Vector(param_count(gen_model), 0.0);
    report.generator_grad_objective = Vector(param_count(gen_model), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        Vector q_weights(all[i].size());
        Sequence prefix;
        prefix.reserve(all[i].size());
        for (std::size_t t = 0; t < all[i].size(); ++t) {
            prefix.push_back(all[i][t]);
            const auto& [num, den] = prefix_sums.at(prefix);
            q_weights[t] = num / den;
        }
        add_scaled(report.generator_grad_stepwise,
                   grad_log_prob_weighted(gen_model, all[i], q_weights), probs[i]);
        add_scaled(report.generator_grad_objective, grad_log_prob(gen_model, all[i]),
                   probs[i] * values[i]);
    }
    report.max_abs_generator_grad_difference = max_abs(elementwise_difference(
        report.generator_grad_stepwise, report.generator_grad_objective));

    // (c) Below the minimum fake energy the hinge silences the fake term and
    // the dropped piece is exactly the fake feature mean.
    const Vector saturated_step = discriminator_descent_step(
        energy_model, demos.sequences, fake_batch, report.margin_saturating);
    report.saturated_step_difference =
        elementwise_difference(report.cost_step, saturated_step);
    report.max_abs_dropped_term_difference = max_abs(elementwise_difference(
        report.saturated_step_difference, report.fake_feature_mean));

    report.pass = report.margin_inactive &&
                  report.max_abs_step_difference < kEquivalenceStepTol &&
                  report.max_abs_generator_grad_difference < kEquivalenceGradTol &&
                  report.max_abs_dropped_term_difference < kEquivalenceDroppedTol;
    return report;
}

EquivalenceReport gan_il_equivalence_check(const TabularGenerator& gen, const LinearEnergy& e,
                                           const DemoSet& demos, double margin, int batch_size,
                                           Rng& rng) {
    if (batch_size < 1) {
        throw std::invalid_argument("gan_il_equivalence_check: batch_size must be >= 1");
    }
    const GeneratorModel gen_model = gen;
    std::vector<Sequence> fake;
    fake.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        fake.push_back(sample_sequence(gen_model, demos.horizon, rng).items);
    }
    return gan_il_equivalence_check(gen, e, demos, margin, fake);
}

}  // namespace ebsg
