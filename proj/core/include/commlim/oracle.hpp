#pragma once

#include <span>
#include <vector>

#include "commlim/blackboard.hpp"
#include "commlim/models.hpp"

namespace commlim {

// Contribution of (sensor i, transcript y) to UB:
// E_U prod_{j != i} E_U p_j,y * (E_U p_i,y - E_0 p_i,y)^2 / E_0 p_i,y.
struct InfoChainTerm {
  int sensor = 0;
  Transcript y;
  double value = 0.0;
};

// I(U;Y) <= E_U D(P_{Y|U} || P_{Y|X~P0}) <= UB, all in nats.
struct InfoChainReport {
  double I = 0.0;
  double Dbar = 0.0;
  double UB = 0.0;
  std::size_t hypotheses = 0;
  std::size_t transcripts = 0;
  std::vector<InfoChainTerm> terms;
};

// Exact enumeration over all cube members and leaves. Needs nk <= 24, a
// cube from which the tree's predicates can be evaluated, and
// members x sample-space size <= 2^26 on finite spaces.
InfoChainReport kl_chain_quantities(const ProtocolTree& tree, const HypothesisCube& cube, bool with_terms = false);
double exact_mutual_information(const ProtocolTree& tree, const HypothesisCube& cube);

struct S1Report {
  int sensor = 0;
  // sum_y w_y ||E_0[S_0 p_y]||^2 / E_0[p_y]
  double sum = 0.0;
  // sum_y w_y I0 (1 - P_0(A_y)), the per-set bound summed
  double per_set_bound = 0.0;
  // 2^{k_i} I0
  double bound = 0.0;
  double i0 = 0.0;
  // sum_y w_y, equal to 2^{k_i} on a budget-valid tree
  double total_weight = 0.0;
  double slack = 0.0;
  bool holds = true;
};

// Fixes the inputs of every sensor other than `sensor` (inputs[sensor] is
// ignored) and evaluates the S1 sum for the reference model. I0 is the
// largest Fisher eigenvalue.
S1Report s1_bound_check(const ProtocolTree& tree, const Model& model, int sensor, std::span<const Observation> inputs,
                        double tolerance = 1e-10);

// sum_i sum_y prod_{j != i} E_0 p_j,y * ||E_0[S_0 p_i,y]||^2 / E_0 p_i,y, the
// limit of UB / delta^2 for the full cube as delta -> 0.
double s1_first_order(const ProtocolTree& tree, const Model& model);

// Smallest achievable P(d_Ham(U_hat, U) > t) over estimators U_hat(Y)
// taking values in the cube, for U uniform on the cube.
double exact_test_error(const ProtocolTree& tree, const HypothesisCube& cube, int t = 0);

}  // namespace commlim
