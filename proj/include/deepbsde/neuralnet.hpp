#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepbsde/rng.hpp"

namespace deepbsde {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class NetMode { Train, Infer };

struct BatchNorm {
  VectorXd gamma;        // trainable scale
  VectorXd beta;         // trainable shift
  VectorXd moving_mean;  // running statistics, updated in train mode only
  VectorXd moving_var;
};

/// One per-timestep subnet: batchnorm(input) -> [affine -> batchnorm -> relu] x2
/// -> affine -> batchnorm. Affine layers carry no bias; the batchnorm shift
/// plays that role. Layer widths are [d, d+10, d+10, d].
///
/// When has_dl_head is set (reflected variant) an extra linear branch maps the
/// second hidden activation to one scalar, rectified downstream to give the
/// nonnegative reflection increment.
struct SubnetParams {
  int dim = 0;     // d
  int hidden = 0;  // d + 10
  MatrixXd w1, w2, w3;
  std::array<BatchNorm, 4> bn;  // input, hidden1, hidden2, output
  bool has_dl_head = false;
  VectorXd head_w;
  double head_b = 0.0;

  double bn_epsilon = 1e-6;
  double bn_decay = 0.99;

  int trainable_count() const {
    int n = static_cast<int>(w1.size() + w2.size() + w3.size());
    for (const auto& b : bn) n += static_cast<int>(b.gamma.size() + b.beta.size());
    if (has_dl_head) n += static_cast<int>(head_w.size()) + 1;
    return n;
  }
};

inline SubnetParams init_subnet(int d, std::uint64_t seed, bool with_dl_head = false) {
  if (d < 1) throw std::invalid_argument("init_subnet: d must be >= 1");
  const int h = d + 10;
  RngStream stream(seed);

  SubnetParams p;
  p.dim = d;
  p.hidden = h;
  p.has_dl_head = with_dl_head;

  auto normal_matrix = [&stream](int rows, int cols) {
    MatrixXd m(rows, cols);
    const double stddev = 5.0 / std::sqrt(double(rows + cols));
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = stddev * stream.gaussian();
    return m;
  };
  p.w1 = normal_matrix(d, h);
  p.w2 = normal_matrix(h, h);
  p.w3 = normal_matrix(h, d);

  const int bn_sizes[4] = {d, h, h, d};
  for (int b = 0; b < 4; ++b) {
    const int n = bn_sizes[b];
    BatchNorm& bn = p.bn[b];
    bn.gamma.resize(n);
    bn.beta.resize(n);
    for (int i = 0; i < n; ++i) bn.gamma(i) = stream.uniform(0.1, 0.5);
    for (int i = 0; i < n; ++i) bn.beta(i) = 0.1 * stream.gaussian();
    bn.moving_mean = VectorXd::Zero(n);
    bn.moving_var = VectorXd::Ones(n);
  }

  if (with_dl_head) {
    const double stddev = 5.0 / std::sqrt(double(h + 1));
    p.head_w.resize(h);
    for (int i = 0; i < h; ++i) p.head_w(i) = stddev * stream.gaussian();
    p.head_b = 0.0;
  }
  return p;
}

struct BnCache {
  VectorXd inv_std;  // 1 / sqrt(var + eps) actually used by the forward pass
  MatrixXd xhat;
};

struct SubnetCache {
  NetMode mode = NetMode::Train;
  BnCache bn0, bn1, bn2, bn3;
  MatrixXd a0;        // bn0 output
  MatrixXd a1, a2;    // post-relu hidden activations
  VectorXd head_pre;  // pre-rectification head output (empty without head)
};

namespace detail {

inline MatrixXd batchnorm_forward(BatchNorm& bn, const MatrixXd& x, NetMode mode,
                                  double eps, double decay, BnCache& cache) {
  if (mode == NetMode::Train) {
    const VectorXd mean = x.colwise().mean();
    const VectorXd var =
        (x.rowwise() - mean.transpose()).array().square().colwise().mean();
    cache.inv_std = (var.array() + eps).sqrt().inverse();
    cache.xhat = (x.rowwise() - mean.transpose()).array().rowwise() *
                 cache.inv_std.transpose().array();
    bn.moving_mean = decay * bn.moving_mean + (1.0 - decay) * mean;
    bn.moving_var = decay * bn.moving_var + (1.0 - decay) * var;
  } else {
    cache.inv_std = (bn.moving_var.array() + eps).sqrt().inverse();
    cache.xhat = (x.rowwise() - bn.moving_mean.transpose()).array().rowwise() *
                 cache.inv_std.transpose().array();
  }
  MatrixXd out = cache.xhat.array().rowwise() * bn.gamma.transpose().array();
  out.array().rowwise() += bn.beta.transpose().array();
  return out;
}

/// Gradient of batchnorm. In train mode the batch-statistics terms are
/// included; in infer mode the statistics are constants.
inline MatrixXd batchnorm_backward(const BatchNorm& bn, const BnCache& cache,
                                   const MatrixXd& grad_out, NetMode mode,
                                   VectorXd& dgamma, VectorXd& dbeta) {
  dgamma = (grad_out.array() * cache.xhat.array()).colwise().sum();
  dbeta = grad_out.colwise().sum();
  MatrixXd dxhat = grad_out.array().rowwise() * bn.gamma.transpose().array();
  if (mode == NetMode::Infer) {
    return dxhat.array().rowwise() * cache.inv_std.transpose().array();
  }
  const VectorXd mean_dxhat = dxhat.colwise().mean();
  const VectorXd mean_dxhat_xhat =
      (dxhat.array() * cache.xhat.array()).colwise().mean();
  MatrixXd dx = dxhat;
  dx.rowwise() -= mean_dxhat.transpose();
  dx.array() -= cache.xhat.array().rowwise() * mean_dxhat_xhat.transpose().array();
  dx.array().rowwise() *= cache.inv_std.transpose().array();
  return dx;
}

}  // namespace detail

struct SubnetEval {
  MatrixXd z;   // main output, batch x d
  VectorXd dl;  // rectified head output, batch (empty without head)
};

/// Forward pass. Train mode uses batch statistics and updates the moving
/// averages; infer mode reads the moving statistics and leaves all state
/// untouched. Train mode needs at least two rows for the batch variance.
inline SubnetEval subnet_forward(SubnetParams& params, const MatrixXd& x, NetMode mode,
                                 SubnetCache* cache = nullptr) {
  if (x.cols() != params.dim)
    throw std::invalid_argument("subnet_forward: input width mismatch");
  if (mode == NetMode::Train && x.rows() < 2)
    throw std::invalid_argument("subnet_forward: train mode needs batch >= 2");

  SubnetCache local;
  SubnetCache& c = cache ? *cache : local;
  c.mode = mode;
  const double eps = params.bn_epsilon, decay = params.bn_decay;

  c.a0 = detail::batchnorm_forward(params.bn[0], x, mode, eps, decay, c.bn0);
  MatrixXd h1 = c.a0 * params.w1;
  c.a1 = detail::batchnorm_forward(params.bn[1], h1, mode, eps, decay, c.bn1)
             .cwiseMax(0.0);
  MatrixXd h2 = c.a1 * params.w2;
  c.a2 = detail::batchnorm_forward(params.bn[2], h2, mode, eps, decay, c.bn2)
             .cwiseMax(0.0);
  MatrixXd h3 = c.a2 * params.w3;

  SubnetEval eval;
  eval.z = detail::batchnorm_forward(params.bn[3], h3, mode, eps, decay, c.bn3);
  if (params.has_dl_head) {
    c.head_pre = (c.a2 * params.head_w).array() + params.head_b;
    eval.dl = c.head_pre.cwiseMax(0.0);
  }
  return eval;
}

struct SubnetGrads {
  MatrixXd w1, w2, w3;
  std::array<VectorXd, 4> dgamma, dbeta;
  VectorXd head_w;
  double head_b = 0.0;
};

/// Exact reverse-mode gradients of subnet_forward. grad_dl may be empty when
/// the head output received no upstream gradient. Returns the gradient with
/// respect to the input through grad_input.
inline SubnetGrads subnet_backward(const SubnetParams& params, const SubnetCache& cache,
                                   const MatrixXd& grad_z, const VectorXd& grad_dl,
                                   MatrixXd* grad_input = nullptr) {
  if (grad_z.cols() != params.dim || grad_z.rows() != cache.a0.rows())
    throw std::invalid_argument("subnet_backward: upstream gradient shape mismatch");
  const NetMode mode = cache.mode;

  SubnetGrads g;
  MatrixXd grad_h3 = detail::batchnorm_backward(params.bn[3], cache.bn3, grad_z, mode,
                                                g.dgamma[3], g.dbeta[3]);
  g.w3 = cache.a2.transpose() * grad_h3;
  MatrixXd grad_a2 = grad_h3 * params.w3.transpose();

  if (params.has_dl_head) {
    g.head_w = VectorXd::Zero(params.hidden);
    if (grad_dl.size() > 0) {
      if (grad_dl.size() != cache.head_pre.size())
        throw std::invalid_argument("subnet_backward: head gradient shape mismatch");
      const VectorXd grad_pre =
          (cache.head_pre.array() > 0.0).select(grad_dl, 0.0);
      g.head_w = cache.a2.transpose() * grad_pre;
      g.head_b = grad_pre.sum();
      grad_a2.noalias() += grad_pre * params.head_w.transpose();
    }
  }

  grad_a2 = (cache.a2.array() > 0.0).select(grad_a2, 0.0);
  MatrixXd grad_h2 = detail::batchnorm_backward(params.bn[2], cache.bn2, grad_a2, mode,
                                                g.dgamma[2], g.dbeta[2]);
  g.w2 = cache.a1.transpose() * grad_h2;
  MatrixXd grad_a1 = grad_h2 * params.w2.transpose();

  grad_a1 = (cache.a1.array() > 0.0).select(grad_a1, 0.0);
  MatrixXd grad_h1 = detail::batchnorm_backward(params.bn[1], cache.bn1, grad_a1, mode,
                                                g.dgamma[1], g.dbeta[1]);
  g.w1 = cache.a0.transpose() * grad_h1;
  MatrixXd grad_a0 = grad_h1 * params.w1.transpose();

  MatrixXd grad_x = detail::batchnorm_backward(params.bn[0], cache.bn0, grad_a0, mode,
                                               g.dgamma[0], g.dbeta[0]);
  if (grad_input) *grad_input = std::move(grad_x);
  return g;
}

/// Trainable globals of one run: the initial value and the first-step control.
struct GlobalVariables {
  double y0 = 0.0;
  VectorXd z0;
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg, long step_index)
      : std::runtime_error(msg), step(step_index) {}
  long step;
};

/// Adam state over the flat trainable vector. Defaults follow the published
/// optimizer constants; only the learning rate is experiment-configurable.
struct OptimizerState {
  long step = 0;
  VectorXd m, v;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerState make(int n_params, double lr) {
    OptimizerState s;
    s.m = VectorXd::Zero(n_params);
    s.v = VectorXd::Zero(n_params);
    s.learning_rate = lr;
    return s;
  }
};

inline void adam_step(OptimizerState& opt, VectorXd& params, const VectorXd& grads) {
  if (params.size() != opt.m.size() || grads.size() != opt.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  if (!grads.allFinite())
    throw TrainingError(
        "adam_step: non-finite gradient at step " + std::to_string(opt.step + 1),
        opt.step + 1);
  opt.step += 1;
  opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grads;
  opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grads.array().square().matrix();
  const double bc1 = 1.0 - std::pow(opt.beta1, double(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, double(opt.step));
  params.array() -= opt.learning_rate * (opt.m.array() / bc1) /
                    ((opt.v.array() / bc2).sqrt() + opt.epsilon);
}

// ---------------------------------------------------------------------------
// Flat parameter vector <-> structured parameters. Order: y0, z0, then per
// subnet w1, w2, w3, bn gamma/beta pairs, head. Column-major within matrices.

inline int trainable_count(const GlobalVariables& globals,
                           const std::vector<SubnetParams>& subnets) {
  int n = 1 + static_cast<int>(globals.z0.size());
  for (const auto& s : subnets) n += s.trainable_count();
  return n;
}

inline VectorXd pack_trainables(const GlobalVariables& globals,
                                const std::vector<SubnetParams>& subnets) {
  VectorXd out(trainable_count(globals, subnets));
  Eigen::Index at = 0;
  out(at++) = globals.y0;
  out.segment(at, globals.z0.size()) = globals.z0;
  at += globals.z0.size();
  auto put = [&](const auto& m) {
    out.segment(at, m.size()) = Eigen::Map<const VectorXd>(m.data(), m.size());
    at += m.size();
  };
  for (const auto& s : subnets) {
    put(s.w1);
    put(s.w2);
    put(s.w3);
    for (const auto& b : s.bn) {
      put(b.gamma);
      put(b.beta);
    }
    if (s.has_dl_head) {
      put(s.head_w);
      out(at++) = s.head_b;
    }
  }
  return out;
}

inline void unpack_trainables(const VectorXd& vec, GlobalVariables& globals,
                              std::vector<SubnetParams>& subnets) {
  if (vec.size() != trainable_count(globals, subnets))
    throw std::invalid_argument("unpack_trainables: size mismatch");
  Eigen::Index at = 0;
  globals.y0 = vec(at++);
  globals.z0 = vec.segment(at, globals.z0.size());
  at += globals.z0.size();
  auto take = [&](auto& m) {
    Eigen::Map<VectorXd>(m.data(), m.size()) = vec.segment(at, m.size());
    at += m.size();
  };
  for (auto& s : subnets) {
    take(s.w1);
    take(s.w2);
    take(s.w3);
    for (auto& b : s.bn) {
      take(b.gamma);
      take(b.beta);
    }
    if (s.has_dl_head) {
      take(s.head_w);
      s.head_b = vec(at++);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: flat trainable vector plus moving statistics and a manifest.
// Internal versioned binary layout.

namespace detail {
inline constexpr char kCheckpointMagic[8] = {'D', 'B', 'S', 'D', 'E', 'N', 'E', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_vec(std::ostream& os, const VectorXd& v) {
  const std::uint64_t n = static_cast<std::uint64_t>(v.size());
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  os.write(reinterpret_cast<const char*>(v.data()), sizeof(double) * n);
}

inline VectorXd read_vec(std::istream& is) {
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  VectorXd v(static_cast<Eigen::Index>(n));
  is.read(reinterpret_cast<char*>(v.data()), sizeof(double) * n);
  if (!is) throw std::runtime_error("checkpoint: truncated vector");
  return v;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const GlobalVariables& globals,
                            const std::vector<SubnetParams>& subnets) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  const std::uint32_t version = detail::kCheckpointVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));

  const std::uint32_t d = subnets.empty() ? static_cast<std::uint32_t>(globals.z0.size())
                                          : static_cast<std::uint32_t>(subnets[0].dim);
  const std::uint32_t hidden = subnets.empty() ? d + 10
                                               : static_cast<std::uint32_t>(subnets[0].hidden);
  const std::uint32_t n_subnets = static_cast<std::uint32_t>(subnets.size());
  const std::uint8_t has_head = !subnets.empty() && subnets[0].has_dl_head ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&d), sizeof(d));
  os.write(reinterpret_cast<const char*>(&hidden), sizeof(hidden));
  os.write(reinterpret_cast<const char*>(&n_subnets), sizeof(n_subnets));
  os.write(reinterpret_cast<const char*>(&has_head), sizeof(has_head));

  detail::write_vec(os, pack_trainables(globals, subnets));
  for (const auto& s : subnets) {
    for (const auto& b : s.bn) {
      detail::write_vec(os, b.moving_mean);
      detail::write_vec(os, b.moving_var);
    }
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline std::pair<GlobalVariables, std::vector<SubnetParams>> load_checkpoint(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::string(magic, 8) != std::string(detail::kCheckpointMagic, 8))
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != detail::kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));

  std::uint32_t d = 0, hidden = 0, n_subnets = 0;
  std::uint8_t has_head = 0;
  is.read(reinterpret_cast<char*>(&d), sizeof(d));
  is.read(reinterpret_cast<char*>(&hidden), sizeof(hidden));
  is.read(reinterpret_cast<char*>(&n_subnets), sizeof(n_subnets));
  is.read(reinterpret_cast<char*>(&has_head), sizeof(has_head));
  if (!is || hidden != d + 10) throw std::runtime_error("load_checkpoint: bad manifest");

  GlobalVariables globals;
  globals.z0 = VectorXd::Zero(d);
  std::vector<SubnetParams> subnets;
  subnets.reserve(n_subnets);
  for (std::uint32_t k = 0; k < n_subnets; ++k)
    subnets.push_back(init_subnet(static_cast<int>(d), 0, has_head != 0));

  const VectorXd flat = detail::read_vec(is);
  if (flat.size() != trainable_count(globals, subnets))
    throw std::runtime_error("load_checkpoint: trainable count mismatch");
  unpack_trainables(flat, globals, subnets);
  for (auto& s : subnets) {
    for (auto& b : s.bn) {
      b.moving_mean = detail::read_vec(is);
      b.moving_var = detail::read_vec(is);
    }
  }
  return {std::move(globals), std::move(subnets)};
}

}  // namespace deepbsde
