#pragma once

// Fully-connected networks with second-order Taylor jets.
//
// A network maps R^d -> R through affine layers; every layer except the last
// is followed by the activation. Parameters live in one flat vector, laid out
// layer by layer as [W_0 (row-major, n_out x n_in), b_0, W_1, b_1, ...].
//
// forward_jets() pushes, for every sample x_i and every coordinate axis e_j,
// the triple (u, e_j . grad u, e_j^T Hess u e_j) through the network. All d
// directions of one sample share the value channel, so a sample occupies
// 1 + 2d columns ("channels") of each layer's state matrix:
//
//     [ value | g_1 ... g_d | h_1 ... h_d ]
//
// which lets each affine layer run as a single GEMM over the whole batch.
// The recorded tape keeps the per-layer inputs and pre-activations so that
// scalar_pullback() can produce exact per-sample parameter gradients.

#include <cstdint>
#include <memory>
#include <vector>

#include "kngd/types.hpp"

namespace kngd {

enum class Activation { tanh, identity };

struct MlpArchitecture {
  // d_in, hidden widths..., 1
  std::vector<int> widths;
  // identity exists so polynomial networks can be checked against closed forms
  Activation activation = Activation::tanh;

  void validate() const;
  int input_dim() const { return widths.front(); }
  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  Index num_params() const;
  Index weight_offset(int layer) const;
  Index bias_offset(int layer) const;
};

struct MlpParams {
  MlpArchitecture arch;
  Vector theta;

  MlpParams() = default;
  MlpParams(MlpArchitecture a, Vector t);

  Eigen::Map<const RowMatrix> weight(int layer) const;
  Eigen::Map<RowMatrix> weight(int layer);
  Eigen::Map<const Vector> bias(int layer) const;
  Eigen::Map<Vector> bias(int layer);
};

// U(-1/sqrt(n_in), 1/sqrt(n_in)) weights, zero biases.
MlpParams init_params(const MlpArchitecture& arch, std::uint64_t seed);

struct JetTape {
  int num_dirs = 0;
  Activation activation = Activation::tanh;
  std::vector<RowMatrix> weights;
  // inputs[l]: n_in(l) x (N * channels), state entering affine layer l
  std::vector<Matrix> inputs;
  // pre[l]: n_out(l) x (N * channels), state leaving affine layer l
  std::vector<Matrix> pre;

  Index channels() const { return 1 + 2 * num_dirs; }
  Index num_samples() const;
  Index num_params() const;
};

struct JetBatch {
  Vector u;       // N
  Matrix grads;   // N x k, du/dx_j
  Matrix diag2;   // N x k, d^2u/dx_j^2
  bool time_axis = false;
  std::shared_ptr<const JetTape> tape;

  Index size() const { return u.size(); }
  // Sum of diag2 over spatial axes (axis 0 is skipped when time_axis is set).
  double laplacian(Index i) const;
  Vector laplacians() const;
  // Recomputes (u, grads, diag2) from the tape's final pre-activations.
  JetBatch replay() const;
};

struct JetCoeffs {
  Vector value;  // N
  Matrix grads;  // N x k
  Matrix diag2;  // N x k

  static JetCoeffs zeros(Index n, Index k);
};

// Jets along every input axis. x is N x d_in.
JetBatch forward_jets(const MlpParams& params, const Matrix& x, bool with_time_axis = false,
                      bool record_tape = true);

// Value-only pass (zero directions); the tape still supports pullback of u.
JetBatch forward_value_jets(const MlpParams& params, const Matrix& x, bool record_tape = true);

// Plain network outputs, no jets, no tape.
Vector forward_values(const MlpParams& params, const Matrix& x);

// Row i is grad_theta of s_i = c_u u_i + sum_j c_g[j] grads(i,j) + sum_j c_h[j] diag2(i,j).
Matrix scalar_pullback(const JetBatch& jets, const JetCoeffs& coeffs);

// Sum over samples of the rows of scalar_pullback(), at the cost of one GEMM per layer.
Vector scalar_pullback_sum(const JetBatch& jets, const JetCoeffs& coeffs);

}  // namespace kngd
