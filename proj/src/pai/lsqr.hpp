#pragma once

#include <cstddef>
#include <vector>

#include "pai/wave.hpp"

namespace pai {

// Matrix-free linear operator. The solver touches A only through this
// interface, so the same code runs against the wave operator and against
// dense test matrices.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual std::size_t domain_size() const = 0;
  virtual std::size_t range_size() const = 0;
  // y = A x; x has domain_size() entries, y range_size().
  virtual void apply(const double* x, double* y) const = 0;
  // x = A^T y.
  virtual void apply_adjoint(const double* y, double* x) const = 0;
};

struct LsqrOptions {
  int max_iters = 30;
  double atol = 1e-8;
  double btol = 1e-8;
  bool record_residuals = true;
};

struct LsqrResult {
  std::vector<double> solution;
  // ||b - A x_k|| per iterate, entry 0 is the initial residual ||b||.
  // Populated when record_residuals is set.
  std::vector<double> residual_history;
  int iterations = 0;
  double residual_norm = 0.0;  // final ||b - A x||
  double b_norm = 0.0;
  bool converged = false;  // an atol/btol stopping test fired
  bool breakdown = false;  // a bidiagonalization norm hit zero
};

// Paige-Saunders LSQR for min ||A x - b||, x0 = 0, no damping. Consumes one
// apply_adjoint at initialization plus one apply and one apply_adjoint per
// iteration: max_iters = 30 means 60 operator applications in the loop body,
// 61 counting initialization. Setting atol = btol = 0 disables early
// stopping so the loop runs all max_iters (unless the residual vanishes).
LsqrResult lsqr_solve(const LinearOperator& op, const std::vector<double>& b,
                      const LsqrOptions& opts);

// The wave operator viewed through the solver interface. Solve counting is
// inherited from the wrapped WaveOperator.
class WaveLinearOperator final : public LinearOperator {
 public:
  explicit WaveLinearOperator(const WaveOperator& op) : op_(op) {}

  std::size_t domain_size() const override;
  std::size_t range_size() const override;
  void apply(const double* x, double* y) const override;
  void apply_adjoint(const double* y, double* x) const override;

 private:
  const WaveOperator& op_;
};

struct LsqrReconstruction {
  Volume volume;
  LsqrResult stats;
};

// Convenience wrapper: LSQR over the wave operator for observed traces.
LsqrReconstruction lsqr_reconstruct(const WaveOperator& op,
                                    const Traces& y_obs,
                                    const LsqrOptions& opts);

}  // namespace pai
