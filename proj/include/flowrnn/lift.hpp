#pragma once

#include <optional>
#include <string>

#include "flowrnn/box.hpp"
#include "flowrnn/nets.hpp"

namespace flowrnn {

/// T = M [T1; 0] with M invertible, T1 of full row rank r and T1 T1_pinv = I_r.
struct RankFactorization {
  Mat M;
  Mat M_inv;
  Mat T1;       // r x p
  Mat T1_pinv;  // p x r
  int rank = 0;
  /// sigma_r / sigma_max of the smallest retained singular value (1 when r = 0).
  double min_retained_ratio = 1.0;
  /// sigma_{r+1} / sigma_max of the largest discarded one (0 when none).
  double max_discarded_ratio = 0.0;
};

/// SVD-based rank factorisation. Singular values at or below tol * sigma_max
/// count as zero. M is orthogonal, T1 = Sigma_r V_r^T and T1_pinv is the
/// Moore-Penrose inverse V_r Sigma_r^{-1}.
RankFactorization rank_factorize(const Mat& T, double tol = 1e-10);

/// RNN in the restricted class plus affine decoder/encoder reproducing the
/// recursion of a one-hidden-layer map g(x, u) exactly.
struct LiftedRnn {
  RnnCell cell;
  AffinePair pair;
  FeedforwardNet source;
  int state_dim = 0;   // d_x
  int input_dim = 0;   // d_u
  int hidden_dim = 0;  // p
  int rank = 0;        // r
  double m_condition = 1.0;
  std::optional<std::string> warning;

  int lifted_dim() const { return cell.state_dim(); }
};

/// Builds h(z, u) = sigma(A~ z + B~ u + b~ + A~ c~), gamma(z) = Q(z + c~),
/// beta(x) = Q^+ x - c~ from g(x, u) = T sigma(A x + B u + b) + c. The input of
/// g is split as (x, u) with x the first `state_dim` coordinates.
LiftedRnn lift_to_rnn(const FeedforwardNet& g, int state_dim, double rank_tol = 1e-10);

struct LiftReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
};

/// Monte Carlo comparison of gamma(Psi_h(n, beta(x), u)) against Psi_g(n, x, u)
/// for n = 0..horizon with x uniform in `x_box` and inputs uniform in `u_box`.
LiftReport verify_lift(const LiftedRnn& lift, const FeedforwardNet& g, int trials, int horizon, const BoxSet& x_box,
                       const BoxSet& u_box, std::uint64_t seed);

}  // namespace flowrnn
