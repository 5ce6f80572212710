#pragma once

#include <vector>

#include "ebsg/demos.hpp"
#include "ebsg/energy.hpp"
#include "ebsg/generator.hpp"
#include "ebsg/numerics.hpp"

namespace ebsg {

/// Tolerances for the three correspondence checks in EquivalenceReport.
inline constexpr double kEquivalenceStepTol = 1e-12;
inline constexpr double kEquivalenceGradTol = 1e-10;
inline constexpr double kEquivalenceDroppedTol = 1e-12;

/// Numerical comparison of the adversarial and imitation-learning updates on
/// one tabular instance. Three checks:
///
/// (a) With the margin above every fake energy (the hinge active on the whole
///     fake batch), the descent step on the hinge discriminator objective
///     equals the ascent step on -E_demo[cost] + E_fake[cost], both estimated
///     on the same demo set and fake batch. step_difference records the
///     elementwise difference.
/// (b) The exact generator gradient computed the trainer's way (per-step
///     scores credited with conditional expectations, enumerated instead of
///     sampled, entropy weight 1) equals the enumerated gradient of
///     E_q[cost] - H(q).
/// (c) With the margin pulled below every fake energy the hinge drops the
///     entire fake term; the step difference then equals exactly the
///     fake-batch feature mean. The saturating margin is derived internally
///     as (min fake energy - 1).
struct EquivalenceReport {
    double margin = 0.0;             ///< margin used for (a)
    double margin_saturating = 0.0;  ///< derived margin used for (c)
    bool margin_inactive = false;    ///< margin > max fake energy, so (a) applies
    Vector fake_energies;

    Vector discriminator_step;  ///< descent direction on the hinge objective
    Vector cost_step;           ///< ascent direction on -E_demo[cost] + E_fake[cost]
    Vector step_difference;     ///< cost_step - discriminator_step
    double max_abs_step_difference = 0.0;

    Vector generator_grad_stepwise;   ///< enumerated per-step-credit form
    Vector generator_grad_objective;  ///< enumerated gradient of E_q[cost] - H(q)
    double max_abs_generator_grad_difference = 0.0;

    Vector saturated_step_difference;  ///< step difference at margin_saturating
    Vector fake_feature_mean;
    double max_abs_dropped_term_difference = 0.0;

    bool pass = false;  ///< margin_inactive and all three checks within tolerance
};

/// Runs the three checks on an explicit fake batch (each sequence of demo
/// length). Requires an order-1 tabular generator, matching vocabulary
/// sizes, and an enumerable instance. Throws EnumerationLimitError when
/// V^T exceeds the enumeration guard.
EquivalenceReport gan_il_equivalence_check(const TabularGenerator& gen, const LinearEnergy& e,
                                           const DemoSet& demos, double margin,
                                           const std::vector<Sequence>& fake_batch);

/// Convenience overload that samples the fake batch from the generator.
EquivalenceReport gan_il_equivalence_check(const TabularGenerator& gen, const LinearEnergy& e,
                                           const DemoSet& demos, double margin, int batch_size,
                                           Rng& rng);

}  // namespace ebsg
