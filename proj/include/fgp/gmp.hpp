#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "fgp/errors.hpp"

namespace fgp::gmp {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

enum class Param { MeanCov, WeightedMean };

// A Gaussian message: mean vector plus covariance matrix, or in
// WeightedMean form the fields hold W*m and the weight matrix W = V^-1.
// A vacuous message (no information) is WeightedMean with W = 0.
struct GaussianMessage {
  CVector mean;
  CMatrix cov;
  Param param = Param::MeanCov;

  Eigen::Index dim() const { return mean.size(); }
  bool is_vacuous() const;
  // Checks Hermitian symmetry, positive semidefiniteness and the
  // mean/cov dimension match; throws on violation.
  void validate() const;
};

GaussianMessage mean_cov(CVector mean, CMatrix cov);
GaussianMessage weighted_mean(CVector wm, CMatrix weight);
// WeightedMean message with W = 0 (carries no information).
GaussianMessage vacuous(Eigen::Index dim);

// General (not necessarily square or Hermitian) node state matrix.
struct StateMatrix {
  CMatrix a;
};

enum class Direction { Forward, Backward };

enum class NodeKind {
  Equality,
  Adder,
  MatrixMult,
  CompoundMultEq,
  CompoundAddObs,
};

// (M + M^H)/2; applied after every update to stop asymmetry drift.
CMatrix hermitianize(const CMatrix& m);

// Equality node: W_z = W_x + W_y, W_z m_z = W_x m_x + W_y m_y.
// Result is in WeightedMean form. Vacuous inputs are handled natively.
GaussianMessage equality_update(const GaussianMessage& x,
                                const GaussianMessage& y);

// Adder node in MeanCov form: covariances always add; the mean adds in
// the forward rule and subtracts when negate_y is set (backward rule).
GaussianMessage adder_update(const GaussianMessage& x,
                             const GaussianMessage& y, bool negate_y);

// Y = A X node. Forward maps MeanCov (m -> A m, V -> A V A^H);
// Backward maps WeightedMean (W -> A^H W A, Wm -> A^H Wm).
GaussianMessage matmult_update(const GaussianMessage& msg,
                               const StateMatrix& a, Direction direction);

// Compound multiply+equality node (Kalman measurement update):
//   G   = (V_y + A V_x A^H)^-1
//   m_z = m_x + V_x A^H G (m_y - A m_x)
//   V_z = V_x - V_x A^H G A V_x
GaussianMessage compound_mult_eq_update(const GaussianMessage& x,
                                        const GaussianMessage& y,
                                        const StateMatrix& a);

// Schur complement d - c a^-1 b computed by triangularizing [a b; c d]
// with partial pivoting and eliminating the c block; a^-1 is never
// formed. Pivots are compared by squared magnitude.
CMatrix faddeev(const CMatrix& a, const CMatrix& b, const CMatrix& c,
                const CMatrix& d);

GaussianMessage convert(const GaussianMessage& msg, Param target);

// Chain of per-section updates: msg_Y = adder_update(obs, noise, bwd),
// state = compound_mult_eq_update(state, msg_Y, A). Returns the
// posterior message after each section.
std::vector<GaussianMessage> run_rls_reference(
    const std::vector<StateMatrix>& a_rows,
    const std::vector<GaussianMessage>& observations,
    const GaussianMessage& prior, const GaussianMessage& noise);

}  // namespace fgp::gmp
