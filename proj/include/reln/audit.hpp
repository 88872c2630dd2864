#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reln/forms.hpp"
#include "reln/layers.hpp"
#include "reln/liealg.hpp"

namespace reln {

/// Parses CLI-style algebra names: so3, sl3, sp4, so13, or gl<k> (k >= 2).
LieAlgebra algebra_from_cli_name(const std::string& name);

struct PropertyResult {
    std::string name;
    double deviation = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Worst relative equivariance deviation of one layer type over `n_group`
/// sampled group elements (random weights and inputs from `rng`). Pool
/// comparisons only count draws whose base argmax margin exceeds 1e-6; a
/// selection change under conjugation in that regime reports as infinity.
double layer_equivariance_dev(LayerKind kind, const LieAlgebra& alg, const BilinearForm& form,
                              std::size_t n_group, double sigma, double alpha, Rng& rng);

/// Worst relative drift of the ReLU gate scalar under conjugation.
double gate_invariance_dev(const LieAlgebra& alg, const BilinearForm& form, std::size_t n_group,
                           double sigma, Rng& rng);

/// Worst relative drift of the invariant readout under conjugation.
double readout_invariance_dev(const LieAlgebra& alg, const BilinearForm& form, std::size_t n_group,
                              double sigma, Rng& rng);

/// The full property suite for one algebra. corrupt_form swaps the invariant
/// form for a random symmetric Gram matrix (the negative control; the
/// invariance properties must then fail).
std::vector<PropertyResult> audit_algebra(const std::string& algebra_cli_name, std::size_t trials,
                                          std::uint64_t seed, bool corrupt_form);

}  // namespace reln
