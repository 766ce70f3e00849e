#include "kngd/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace kngd {

void MlpArchitecture::validate() const {
  if (widths.size() < 2) {
    throw std::invalid_argument("MlpArchitecture: need at least input and output widths");
  }
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("MlpArchitecture: layer widths must be positive");
  }
  if (widths.back() != 1) {
    throw std::invalid_argument("MlpArchitecture: output width must be 1, got " +
                                std::to_string(widths.back()));
  }
}

Index MlpArchitecture::num_params() const {
  Index total = 0;
  for (int l = 0; l < num_layers(); ++l) {
    total += static_cast<Index>(widths[l] + 1) * widths[l + 1];
  }
  return total;
}

Index MlpArchitecture::weight_offset(int layer) const {
  Index off = 0;
  for (int l = 0; l < layer; ++l) off += static_cast<Index>(widths[l] + 1) * widths[l + 1];
  return off;
}

Index MlpArchitecture::bias_offset(int layer) const {
  return weight_offset(layer) + static_cast<Index>(widths[layer]) * widths[layer + 1];
}

MlpParams::MlpParams(MlpArchitecture a, Vector t) : arch(std::move(a)), theta(std::move(t)) {
  arch.validate();
  if (theta.size() != arch.num_params()) {
    throw std::invalid_argument("MlpParams: theta has " + std::to_string(theta.size()) +
                                " entries, architecture needs " +
                                std::to_string(arch.num_params()));
  }
}

Eigen::Map<const RowMatrix> MlpParams::weight(int layer) const {
  return {theta.data() + arch.weight_offset(layer), arch.widths[layer + 1], arch.widths[layer]};
}

Eigen::Map<RowMatrix> MlpParams::weight(int layer) {
  return {theta.data() + arch.weight_offset(layer), arch.widths[layer + 1], arch.widths[layer]};
}

Eigen::Map<const Vector> MlpParams::bias(int layer) const {
  return {theta.data() + arch.bias_offset(layer), arch.widths[layer + 1]};
}

Eigen::Map<Vector> MlpParams::bias(int layer) {
  return {theta.data() + arch.bias_offset(layer), arch.widths[layer + 1]};
}

MlpParams init_params(const MlpArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  MlpParams params(arch, Vector::Zero(arch.num_params()));
  for (int l = 0; l < arch.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.widths[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = params.weight(l);
    for (Index r = 0; r < w.rows(); ++r) {
      for (Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
    }
  }
  return params;
}

Index JetTape::num_samples() const {
  return inputs.empty() ? 0 : inputs.front().cols() / channels();
}

Index JetTape::num_params() const {
  Index total = 0;
  for (const auto& w : weights) total += w.size() + w.rows();
  return total;
}

double JetBatch::laplacian(Index i) const {
  const Index first = time_axis ? 1 : 0;
  return diag2.row(i).tail(diag2.cols() - first).sum();
}

Vector JetBatch::laplacians() const {
  const Index first = time_axis ? 1 : 0;
  return diag2.rightCols(diag2.cols() - first).rowwise().sum();
}

JetCoeffs JetCoeffs::zeros(Index n, Index k) {
  return {Vector::Zero(n), Matrix::Zero(n, k), Matrix::Zero(n, k)};
}

namespace {

// Channel state of one tanh layer, applied column block by column block.
void activate(Activation act, Index k, const Matrix& pre, Matrix& out) {
  out = pre;
  if (act == Activation::identity) return;
  const Index c = 1 + 2 * k;
  const Index n = pre.cols() / c;
  for (Index i = 0; i < n; ++i) {
    const Index base = i * c;
    const Eigen::ArrayXd t = pre.col(base).array().tanh();
    const Eigen::ArrayXd s1 = 1.0 - t.square();
    const Eigen::ArrayXd s2 = -2.0 * t * s1;
    out.col(base) = t.matrix();
    for (Index j = 0; j < k; ++j) {
      const auto g = pre.col(base + 1 + j).array();
      const auto h = pre.col(base + 1 + k + j).array();
      out.col(base + 1 + j) = (s1 * g).matrix();
      out.col(base + 1 + k + j) = (s2 * g.square() + s1 * h).matrix();
    }
  }
}

// Adjoint of activate(): maps adjoints of the activated state to adjoints of `pre`.
void activate_backward(Activation act, Index k, const Matrix& pre, Matrix& bar) {
  if (act == Activation::identity) return;
  const Index c = 1 + 2 * k;
  const Index n = pre.cols() / c;
  for (Index i = 0; i < n; ++i) {
    const Index base = i * c;
    const Eigen::ArrayXd t = pre.col(base).array().tanh();
    const Eigen::ArrayXd s1 = 1.0 - t.square();
    const Eigen::ArrayXd s2 = -2.0 * t * s1;
    const Eigen::ArrayXd s3 = s1 * (6.0 * t.square() - 2.0);
    Eigen::ArrayXd zbar = bar.col(base).array() * s1;
    for (Index j = 0; j < k; ++j) {
      const auto g = pre.col(base + 1 + j).array();
      const auto h = pre.col(base + 1 + k + j).array();
      const Eigen::ArrayXd gbar = bar.col(base + 1 + j).array();
      const Eigen::ArrayXd hbar = bar.col(base + 1 + k + j).array();
      zbar += gbar * s2 * g + hbar * (s3 * g.square() + s2 * h);
      bar.col(base + 1 + j) = (gbar * s1 + 2.0 * hbar * s2 * g).matrix();
      bar.col(base + 1 + k + j) = (hbar * s1).matrix();
    }
    bar.col(base) = zbar.matrix();
  }
}

JetBatch run_jets(const MlpParams& params, const Matrix& x, Index k, bool time_axis,
                  bool record_tape) {
  params.arch.validate();
  const Index d = params.arch.input_dim();
  if (x.cols() != d) {
    throw std::invalid_argument("forward_jets: points have " + std::to_string(x.cols()) +
                                " columns, network expects " + std::to_string(d));
  }
  if (time_axis && d < 2) {
    throw std::invalid_argument("forward_jets: time axis needs at least one spatial axis");
  }
  const Index n = x.rows();
  const Index c = 1 + 2 * k;

  Matrix state = Matrix::Zero(d, n * c);
  for (Index i = 0; i < n; ++i) {
    state.col(i * c) = x.row(i).transpose();
    for (Index j = 0; j < k; ++j) state(j, i * c + 1 + j) = 1.0;
  }

  auto tape = std::make_shared<JetTape>();
  tape->num_dirs = static_cast<int>(k);
  tape->activation = params.arch.activation;

  const int layers = params.arch.num_layers();
  Matrix pre;
  for (int l = 0; l < layers; ++l) {
    const auto w = params.weight(l);
    pre.noalias() = w * state;
    const auto b = params.bias(l);
    for (Index i = 0; i < n; ++i) pre.col(i * c) += b;
    if (record_tape) {
      tape->weights.emplace_back(w);
      tape->inputs.push_back(state);
      tape->pre.push_back(pre);
    }
    if (l + 1 < layers) activate(params.arch.activation, k, pre, state);
  }

  JetBatch out;
  out.time_axis = time_axis;
  out.u.resize(n);
  out.grads.resize(n, k);
  out.diag2.resize(n, k);
  for (Index i = 0; i < n; ++i) {
    out.u(i) = pre(0, i * c);
    for (Index j = 0; j < k; ++j) {
      out.grads(i, j) = pre(0, i * c + 1 + j);
      out.diag2(i, j) = pre(0, i * c + 1 + k + j);
    }
  }
  if (record_tape) out.tape = std::move(tape);
  return out;
}

Matrix seed_adjoint(const JetBatch& jets, const JetCoeffs& coeffs) {
  if (!jets.tape) throw std::invalid_argument("scalar_pullback: jets were computed without a tape");
  const Index n = jets.size();
  const Index k = jets.tape->num_dirs;
  if (coeffs.value.size() != n || coeffs.grads.rows() != n || coeffs.diag2.rows() != n ||
      coeffs.grads.cols() != k || coeffs.diag2.cols() != k) {
    throw std::invalid_argument("scalar_pullback: coefficient shapes do not match the jet batch");
  }
  const Index c = 1 + 2 * k;
  Matrix bar(1, n * c);
  for (Index i = 0; i < n; ++i) {
    bar(0, i * c) = coeffs.value(i);
    for (Index j = 0; j < k; ++j) {
      bar(0, i * c + 1 + j) = coeffs.grads(i, j);
      bar(0, i * c + 1 + k + j) = coeffs.diag2(i, j);
    }
  }
  return bar;
}

}  // namespace

JetBatch forward_jets(const MlpParams& params, const Matrix& x, bool with_time_axis,
                      bool record_tape) {
  return run_jets(params, x, params.arch.input_dim(), with_time_axis, record_tape);
}

JetBatch forward_value_jets(const MlpParams& params, const Matrix& x, bool record_tape) {
  return run_jets(params, x, 0, false, record_tape);
}

Vector forward_values(const MlpParams& params, const Matrix& x) {
  params.arch.validate();
  if (x.cols() != params.arch.input_dim()) {
    throw std::invalid_argument("forward_values: dimension mismatch");
  }
  Matrix state = x.transpose();
  const int layers = params.arch.num_layers();
  for (int l = 0; l < layers; ++l) {
    Matrix z = params.weight(l) * state;
    z.colwise() += params.bias(l);
    if (l + 1 < layers && params.arch.activation == Activation::tanh) {
      state = z.array().tanh().matrix();
    } else {
      state = std::move(z);
    }
  }
  return state.row(0).transpose();
}

JetBatch JetBatch::replay() const {
  if (!tape) throw std::invalid_argument("JetBatch::replay: no tape recorded");
  const Index k = tape->num_dirs;
  const Index c = tape->channels();
  const Index n = tape->num_samples();
  const Matrix& out = tape->pre.back();
  JetBatch r;
  r.time_axis = time_axis;
  r.tape = tape;
  r.u.resize(n);
  r.grads.resize(n, k);
  r.diag2.resize(n, k);
  for (Index i = 0; i < n; ++i) {
    r.u(i) = out(0, i * c);
    for (Index j = 0; j < k; ++j) {
      r.grads(i, j) = out(0, i * c + 1 + j);
      r.diag2(i, j) = out(0, i * c + 1 + k + j);
    }
  }
  return r;
}

Matrix scalar_pullback(const JetBatch& jets, const JetCoeffs& coeffs) {
  Matrix bar = seed_adjoint(jets, coeffs);
  const JetTape& tape = *jets.tape;
  const Index n = jets.size();
  const Index c = tape.channels();
  const Index num_params = tape.num_params();

  // Column i of jt is the parameter gradient of sample i.
  Matrix jt = Matrix::Zero(num_params, n);
  Index offset = num_params;
  Matrix wbar_t;
  for (int l = static_cast<int>(tape.weights.size()) - 1; l >= 0; --l) {
    const RowMatrix& w = tape.weights[l];
    const Matrix& input = tape.inputs[l];
    offset -= w.size() + w.rows();
    for (Index i = 0; i < n; ++i) {
      // (n_in x c) * (c x n_out): column-major storage equals row-major dW.
      wbar_t.noalias() = input.middleCols(i * c, c) * bar.middleCols(i * c, c).transpose();
      jt.col(i).segment(offset, w.size()) = Eigen::Map<const Vector>(wbar_t.data(), w.size());
      jt.col(i).segment(offset + w.size(), w.rows()) = bar.col(i * c);
    }
    if (l > 0) {
      Matrix next = w.transpose() * bar;
      activate_backward(tape.activation, tape.num_dirs, tape.pre[l - 1], next);
      bar = std::move(next);
    }
  }
  return jt.transpose();
}

Vector scalar_pullback_sum(const JetBatch& jets, const JetCoeffs& coeffs) {
  Matrix bar = seed_adjoint(jets, coeffs);
  const JetTape& tape = *jets.tape;
  const Index n = jets.size();
  const Index c = tape.channels();
  const Index num_params = tape.num_params();

  Vector grad = Vector::Zero(num_params);
  Index offset = num_params;
  for (int l = static_cast<int>(tape.weights.size()) - 1; l >= 0; --l) {
    const RowMatrix& w = tape.weights[l];
    offset -= w.size() + w.rows();
    const Matrix wbar_t = tape.inputs[l] * bar.transpose();
    grad.segment(offset, w.size()) = Eigen::Map<const Vector>(wbar_t.data(), w.size());
    Vector bbar = Vector::Zero(w.rows());
    for (Index i = 0; i < n; ++i) bbar += bar.col(i * c);
    grad.segment(offset + w.size(), w.rows()) = bbar;
    if (l > 0) {
      Matrix next = w.transpose() * bar;
      activate_backward(tape.activation, tape.num_dirs, tape.pre[l - 1], next);
      bar = std::move(next);
    }
  }
  return grad;
}

}  // namespace kngd
