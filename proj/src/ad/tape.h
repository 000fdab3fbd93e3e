#pragma once

// Small reverse-mode autodiff engine over batched Eigen matrices.
//
// Values are dense S-matrices with rows = batch items (points, rays, pixels)
// and cols = channels. Ops execute eagerly and record a backward closure; a
// single reverse sweep from a 1x1 loss accumulates gradients into every node
// that (transitively) depends on a param leaf.
//
// Second-order terms (eikonal, gradient-fed color) are handled without a
// second-order engine: the field's input-gradient computation is itself
// recorded as tape ops (matmul_wt against layer weights, multiply by
// activation derivatives, encoding pullback), so the ordinary backward sweep
// differentiates it with respect to the params exactly.
//
// Templated on the scalar so training runs in float while finite-difference
// checks run the identical code path in double.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sve::ad {

using VarId = int32_t;
constexpr VarId kNoVar = -1;

template <typename S>
S softplus_stable(S z, S beta) {
  // max(z,0) + log1p(exp(-beta*|z|))/beta, immune to exp overflow
  S az = std::abs(z) * beta;
  S tail = az > S(30) ? S(0) : std::log1p(std::exp(-az)) / beta;
  return (z > S(0) ? z : S(0)) + tail;
}

template <typename S>
S sigmoid_stable(S z) {
  if (z >= S(0)) return S(1) / (S(1) + std::exp(-z));
  S e = std::exp(z);
  return e / (S(1) + e);
}

template <typename S>
class Tape {
 public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  struct Node {
    Mat value;
    Mat grad;  // empty until touched by backward
    bool needs_grad = false;
    std::function<void(Tape&)> backward;  // null for leaves
  };

  // ---- leaves ----

  VarId input(Mat v) { return push(std::move(v), false, nullptr); }

  VarId param(Mat v) { return push(std::move(v), true, nullptr); }

  // ---- access ----

  const Mat& value(VarId id) const { return nodes_[check(id)].value; }

  const Mat& grad(VarId id) const {
    const Node& n = nodes_[check(id)];
    if (n.grad.size() == 0) {
      static const Mat empty;
      return empty;
    }
    return n.grad;
  }

  bool needs_grad(VarId id) const { return nodes_[check(id)].needs_grad; }
  size_t size() const { return nodes_.size(); }

  // ---- elementwise binary (same shape) ----

  VarId add(VarId a, VarId b) {
    require_same_shape(a, b, "add");
    Mat out = value(a) + value(b);
    return push(std::move(out), wants(a) || wants(b), [a, b, id = next_id()](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      t.accum(a, g);
      t.accum(b, g);
    });
  }

  VarId sub(VarId a, VarId b) {
    require_same_shape(a, b, "sub");
    Mat out = value(a) - value(b);
    return push(std::move(out), wants(a) || wants(b), [a, b, id = next_id()](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      t.accum(a, g);
      t.accum(b, -g);
    });
  }

  VarId mul(VarId a, VarId b) {
    require_same_shape(a, b, "mul");
    Mat out = value(a).cwiseProduct(value(b));
    return push(std::move(out), wants(a) || wants(b), [a, b, id = next_id()](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      if (t.wants(a)) t.accum(a, g.cwiseProduct(t.nodes_[b].value));
      if (t.wants(b)) t.accum(b, g.cwiseProduct(t.nodes_[a].value));
    });
  }

  VarId div(VarId a, VarId b) {
    require_same_shape(a, b, "div");
    Mat out = value(a).cwiseQuotient(value(b));
    return push(std::move(out), wants(a) || wants(b), [a, b, id = next_id()](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      const Mat& bv = t.nodes_[b].value;
      if (t.wants(a)) t.accum(a, g.cwiseQuotient(bv));
      if (t.wants(b))
        t.accum(b, -g.cwiseProduct(t.nodes_[id].value).cwiseQuotient(bv));
    });
  }

  // ---- elementwise unary ----

  VarId neg(VarId a) {
    Mat out = -value(a);
    return push(std::move(out), wants(a),
                [a, id = next_id()](Tape& t) { t.accum(a, -t.nodes_[id].grad); });
  }

  VarId scale(VarId a, S c) {
    Mat out = value(a) * c;
    return push(std::move(out), wants(a),
                [a, c, id = next_id()](Tape& t) { t.accum(a, t.nodes_[id].grad * c); });
  }

  VarId add_const(VarId a, S c) {
    Mat out = (value(a).array() + c).matrix();
    return push(std::move(out), wants(a),
                [a, id = next_id()](Tape& t) { t.accum(a, t.nodes_[id].grad); });
  }

  VarId sin(VarId a) {
    Mat out = value(a).array().sin().matrix();
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      t.accum(a, t.nodes_[id].grad.cwiseProduct(t.nodes_[a].value.array().cos().matrix()));
    });
  }

  VarId cos(VarId a) {
    Mat out = value(a).array().cos().matrix();
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      t.accum(a, -t.nodes_[id].grad.cwiseProduct(t.nodes_[a].value.array().sin().matrix()));
    });
  }

  VarId exp(VarId a) {
    Mat out = value(a).array().exp().matrix();
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      t.accum(a, t.nodes_[id].grad.cwiseProduct(t.nodes_[id].value));
    });
  }

  VarId log(VarId a) {
    Mat out = value(a).array().log().matrix();
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      t.accum(a, t.nodes_[id].grad.cwiseQuotient(t.nodes_[a].value));
    });
  }

  VarId square(VarId a) {
    Mat out = value(a).array().square().matrix();
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      t.accum(a, S(2) * t.nodes_[id].grad.cwiseProduct(t.nodes_[a].value));
    });
  }

  VarId sqrt_eps(VarId a, S eps) {
    Mat out = (value(a).array() + eps).sqrt().matrix();
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      t.accum(a, (t.nodes_[id].grad.array() / (S(2) * t.nodes_[id].value.array())).matrix());
    });
  }

  VarId abs(VarId a) {
    Mat out = value(a).array().abs().matrix();
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      Mat sign = t.nodes_[a].value.unaryExpr(
          [](S v) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
      t.accum(a, t.nodes_[id].grad.cwiseProduct(sign));
    });
  }

  // Gradient passes only strictly inside (lo, hi).
  VarId clamp(VarId a, S lo, S hi) {
    Mat out = value(a).array().max(lo).min(hi).matrix();
    return push(std::move(out), wants(a), [a, lo, hi, id = next_id()](Tape& t) {
      const Mat& x = t.nodes_[a].value;
      Mat pass = ((x.array() > lo) && (x.array() < hi)).template cast<S>().matrix();
      t.accum(a, t.nodes_[id].grad.cwiseProduct(pass));
    });
  }

  VarId sigmoid(VarId a) {
    Mat out = value(a).unaryExpr([](S z) { return sigmoid_stable(z); });
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      const Mat& y = t.nodes_[id].value;
      t.accum(a, t.nodes_[id].grad.cwiseProduct(
                     y.cwiseProduct((Mat::Ones(y.rows(), y.cols()) - y))));
    });
  }

  VarId softplus(VarId a, S beta) {
    Mat out = value(a).unaryExpr([beta](S z) { return softplus_stable(z, beta); });
    return push(std::move(out), wants(a), [a, beta, id = next_id()](Tape& t) {
      Mat d = t.nodes_[a].value.unaryExpr([beta](S z) { return sigmoid_stable(beta * z); });
      t.accum(a, t.nodes_[id].grad.cwiseProduct(d));
    });
  }

  // softplus'(z) = sigmoid(beta z); its backward uses softplus''.
  VarId softplus_grad(VarId a, S beta) {
    Mat out = value(a).unaryExpr([beta](S z) { return sigmoid_stable(beta * z); });
    return push(std::move(out), wants(a), [a, beta, id = next_id()](Tape& t) {
      const Mat& y = t.nodes_[id].value;
      Mat d = beta * y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y);
      t.accum(a, t.nodes_[id].grad.cwiseProduct(d));
    });
  }

  // ---- linear algebra ----

  // x: N x in, W: out x in, b: 1 x out  ->  N x out
  VarId linear(VarId x, VarId W, VarId b) {
    const Mat& xv = value(x);
    const Mat& wv = value(W);
    const Mat& bv = value(b);
    if (wv.cols() != xv.cols() || bv.rows() != 1 || bv.cols() != wv.rows())
      throw std::invalid_argument("linear: shape mismatch");
    Mat out = xv * wv.transpose();
    out.rowwise() += bv.row(0);
    return push(std::move(out), wants(x) || wants(W) || wants(b),
                [x, W, b, id = next_id()](Tape& t) {
                  const Mat& g = t.nodes_[id].grad;
                  if (t.wants(x)) t.accum(x, g * t.nodes_[W].value);
                  if (t.wants(W)) t.accum(W, g.transpose() * t.nodes_[x].value);
                  if (t.wants(b)) t.accum(b, g.colwise().sum());
                });
  }

  // G: N x out, W: out x in  ->  N x in  (pullback of a linear layer)
  VarId matmul_wt(VarId G, VarId W) {
    const Mat& gv = value(G);
    const Mat& wv = value(W);
    if (gv.cols() != wv.rows()) throw std::invalid_argument("matmul_wt: shape mismatch");
    Mat out = gv * wv;
    return push(std::move(out), wants(G) || wants(W), [G, W, id = next_id()](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      if (t.wants(G)) t.accum(G, g * t.nodes_[W].value.transpose());
      if (t.wants(W)) t.accum(W, t.nodes_[G].value.transpose() * g);
    });
  }

  // v: 1 x C  ->  n x C, every row a copy
  VarId row_broadcast(VarId v, int n) {
    const Mat& vv = value(v);
    if (vv.rows() != 1) throw std::invalid_argument("row_broadcast: expects a row vector");
    Mat out = vv.replicate(n, 1);
    return push(std::move(out), wants(v), [v, id = next_id()](Tape& t) {
      t.accum(v, t.nodes_[id].grad.colwise().sum());
    });
  }

  // v: N x 1  ->  N x c, every column a copy
  VarId col_broadcast(VarId v, int c) {
    const Mat& vv = value(v);
    if (vv.cols() != 1) throw std::invalid_argument("col_broadcast: expects a column vector");
    Mat out = vv.replicate(1, c);
    return push(std::move(out), wants(v), [v, id = next_id()](Tape& t) {
      t.accum(v, t.nodes_[id].grad.rowwise().sum());
    });
  }

  // s: 1 x 1 scalar var
  VarId mul_scalar_var(VarId x, VarId s) {
    const Mat& sv = value(s);
    if (sv.rows() != 1 || sv.cols() != 1)
      throw std::invalid_argument("mul_scalar_var: scalar must be 1x1");
    Mat out = value(x) * sv(0, 0);
    return push(std::move(out), wants(x) || wants(s), [x, s, id = next_id()](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      if (t.wants(x)) t.accum(x, g * t.nodes_[s].value(0, 0));
      if (t.wants(s)) {
        Mat gs(1, 1);
        gs(0, 0) = g.cwiseProduct(t.nodes_[x].value).sum();
        t.accum(s, gs);
      }
    });
  }

  // ---- reductions ----

  VarId sum(VarId a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      const Mat& x = t.nodes_[a].value;
      t.accum(a, Mat::Constant(x.rows(), x.cols(), t.nodes_[id].grad(0, 0)));
    });
  }

  VarId mean(VarId a) {
    const Mat& xv = value(a);
    Mat out(1, 1);
    out(0, 0) = xv.sum() / S(xv.size());
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      const Mat& x = t.nodes_[a].value;
      S g = t.nodes_[id].grad(0, 0) / S(x.size());
      t.accum(a, Mat::Constant(x.rows(), x.cols(), g));
    });
  }

  VarId sum_cols(VarId a) {  // N x C -> N x 1
    Mat out = value(a).rowwise().sum();
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      const Mat& x = t.nodes_[a].value;
      t.accum(a, t.nodes_[id].grad.replicate(1, static_cast<int>(x.cols())));
    });
  }

  VarId rownorm_eps(VarId a, S eps) {  // N x C -> N x 1, sqrt(sum x^2 + eps)
    const Mat& xv = value(a);
    Mat out = (xv.array().square().rowwise().sum() + eps).sqrt().matrix();
    return push(std::move(out), wants(a), [a, id = next_id()](Tape& t) {
      const Mat& x = t.nodes_[a].value;
      const Mat& y = t.nodes_[id].value;
      Mat scale_col = t.nodes_[id].grad.cwiseQuotient(y);
      t.accum(a, (x.array().colwise() * scale_col.col(0).array()).matrix());
    });
  }

  // ---- structure ----

  VarId concat_cols(const std::vector<VarId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index total = 0;
    bool any = false;
    for (VarId p : parts) {
      if (value(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
      total += value(p).cols();
      any = any || wants(p);
    }
    Mat out(rows, total);
    Eigen::Index off = 0;
    for (VarId p : parts) {
      out.middleCols(off, value(p).cols()) = value(p);
      off += value(p).cols();
    }
    return push(std::move(out), any, [parts, id = next_id()](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      Eigen::Index off = 0;
      for (VarId p : parts) {
        Eigen::Index c = t.nodes_[p].value.cols();
        if (t.wants(p)) t.accum(p, g.middleCols(off, c));
        off += c;
      }
    });
  }

  VarId slice_cols(VarId a, int start, int len) {
    Mat out = value(a).middleCols(start, len);
    return push(std::move(out), wants(a), [a, start, len, id = next_id()](Tape& t) {
      const Mat& x = t.nodes_[a].value;
      Mat g = Mat::Zero(x.rows(), x.cols());
      g.middleCols(start, len) = t.nodes_[id].grad;
      t.accum(a, g);
    });
  }

  VarId gather_rows(VarId a, std::vector<int> idx) {
    const Mat& xv = value(a);
    Mat out(static_cast<Eigen::Index>(idx.size()), xv.cols());
    for (size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = xv.row(idx[k]);
    return push(std::move(out), wants(a), [a, idx = std::move(idx), id = next_id()](Tape& t) {
      const Mat& x = t.nodes_[a].value;
      const Mat& g = t.nodes_[id].grad;
      Mat acc = Mat::Zero(x.rows(), x.cols());
      for (size_t k = 0; k < idx.size(); ++k)
        acc.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
      t.accum(a, acc);
    });
  }

  // Reinterpret in row-major element order.
  VarId reshape_rm(VarId a, int rows, int cols) {
    const Mat& xv = value(a);
    if (xv.size() != static_cast<Eigen::Index>(rows) * cols)
      throw std::invalid_argument("reshape_rm: size mismatch");
    Mat out(rows, cols);
    Eigen::Index in_cols = xv.cols();
    for (Eigen::Index k = 0; k < xv.size(); ++k)
      out(k / cols, k % cols) = xv(k / in_cols, k % in_cols);
    return push(std::move(out), wants(a), [a, cols, id = next_id()](Tape& t) {
      const Mat& x = t.nodes_[a].value;
      const Mat& g = t.nodes_[id].grad;
      Mat acc(x.rows(), x.cols());
      Eigen::Index in_cols = x.cols();
      for (Eigen::Index k = 0; k < x.size(); ++k)
        acc(k / in_cols, k % in_cols) = g(k / cols, k % cols);
      t.accum(a, acc);
    });
  }

  // ---- fused geometry / rendering ops ----

  // points: N x 3, motion: N x 6 (axis-angle u, translation T).
  // out = R(u) p + T via Rodrigues, series-safe near theta = 0.
  VarId rigid_motion(VarId points, VarId motion) {
    const Mat& pv = value(points);
    const Mat& mv = value(motion);
    if (pv.cols() != 3 || mv.cols() != 6 || pv.rows() != mv.rows())
      throw std::invalid_argument("rigid_motion: expects N x 3 points, N x 6 motion");
    Mat out(pv.rows(), 3);
    for (Eigen::Index i = 0; i < pv.rows(); ++i) {
      Eigen::Matrix<S, 3, 1> p = pv.row(i).transpose();
      Eigen::Matrix<S, 3, 1> u = mv.row(i).template head<3>().transpose();
      Eigen::Matrix<S, 3, 1> T = mv.row(i).template tail<3>().transpose();
      S t2 = u.squaredNorm();
      auto [A, B] = rodrigues_ab(t2);
      Eigen::Matrix<S, 3, 1> c1 = u.cross(p);
      Eigen::Matrix<S, 3, 1> c2 = u * u.dot(p) - p * t2;  // u x (u x p)
      out.row(i) = (p + A * c1 + B * c2 + T).transpose();
    }
    return push(std::move(out), wants(points) || wants(motion),
                [points, motion, id = next_id()](Tape& t) {
                  const Mat& pv = t.nodes_[points].value;
                  const Mat& mv = t.nodes_[motion].value;
                  const Mat& gout = t.nodes_[id].grad;
                  Mat gp = Mat::Zero(pv.rows(), 3);
                  Mat gm = Mat::Zero(pv.rows(), 6);
                  for (Eigen::Index i = 0; i < pv.rows(); ++i) {
                    Eigen::Matrix<S, 3, 1> p = pv.row(i).transpose();
                    Eigen::Matrix<S, 3, 1> u = mv.row(i).template head<3>().transpose();
                    Eigen::Matrix<S, 3, 1> g = gout.row(i).transpose();
                    S t2 = u.squaredNorm();
                    auto [A, B] = rodrigues_ab(t2);
                    auto [C, E] = rodrigues_ce(t2, A, B);
                    S up = u.dot(p);
                    S gu = g.dot(u);
                    S gp_ = g.dot(p);
                    Eigen::Matrix<S, 3, 1> uxp = u.cross(p);
                    // R = I + A [u]x + B [u]x^2; [u]x is antisymmetric, [u]x^2
                    // symmetric, so R^T g = g + A (g x u) + B (u (u.g) - t2 g).
                    Eigen::Matrix<S, 3, 1> vp =
                        g + A * g.cross(u) + B * (u * gu - g * t2);
                    Eigen::Matrix<S, 3, 1> vu =
                        A * p.cross(g) + B * (g * up + p * gu - u * (S(2) * gp_)) +
                        (C * g.dot(uxp) + E * (up * gu - t2 * gp_)) * u;
                    if (t.wants(points)) gp.row(i) = vp.transpose();
                    if (t.wants(motion)) {
                      gm.row(i).template head<3>() = vu.transpose();
                      gm.row(i).template tail<3>() = g.transpose();
                    }
                  }
                  if (t.wants(points)) t.accum(points, gp);
                  if (t.wants(motion)) t.accum(motion, gm);
                });
  }

  // alphas: R x n in [0,1] -> weights w_i = a_i * prod_{j<i} (1 - a_j).
  // Backward is division-free (reverse suffix recursion), so a_j = 1 is safe.
  VarId transmittance_weights(VarId alphas) {
    const Mat& av = value(alphas);
    Mat out(av.rows(), av.cols());
    for (Eigen::Index r = 0; r < av.rows(); ++r) {
      S T = S(1);
      for (Eigen::Index i = 0; i < av.cols(); ++i) {
        out(r, i) = av(r, i) * T;
        T *= (S(1) - av(r, i));
      }
    }
    return push(std::move(out), wants(alphas), [alphas, id = next_id()](Tape& t) {
      const Mat& a = t.nodes_[alphas].value;
      const Mat& g = t.nodes_[id].grad;
      Mat da(a.rows(), a.cols());
      Eigen::Index n = a.cols();
      std::vector<S> T(static_cast<size_t>(n));
      for (Eigen::Index r = 0; r < a.rows(); ++r) {
        S acc = S(1);
        for (Eigen::Index i = 0; i < n; ++i) {
          T[static_cast<size_t>(i)] = acc;
          acc *= (S(1) - a(r, i));
        }
        S Bsuf = S(0);  // sum_{i>k} g_i a_i prod_{k<j<i}(1-a_j)
        for (Eigen::Index k = n - 1; k >= 0; --k) {
          da(r, k) = T[static_cast<size_t>(k)] * (g(r, k) - Bsuf);
          Bsuf = (S(1) - a(r, k)) * Bsuf + g(r, k) * a(r, k);
        }
      }
      t.accum(alphas, da);
    });
  }

  // weights: R x n, values: (R*n) x C grouped ray-major -> R x C.
  VarId composite(VarId weights, VarId values) {
    const Mat& wv = value(weights);
    const Mat& vv = value(values);
    Eigen::Index R = wv.rows(), n = wv.cols(), C = vv.cols();
    if (vv.rows() != R * n) throw std::invalid_argument("composite: values rows != R*n");
    Mat out = Mat::Zero(R, C);
    for (Eigen::Index r = 0; r < R; ++r)
      for (Eigen::Index i = 0; i < n; ++i) out.row(r) += wv(r, i) * vv.row(r * n + i);
    return push(std::move(out), wants(weights) || wants(values),
                [weights, values, id = next_id()](Tape& t) {
                  const Mat& w = t.nodes_[weights].value;
                  const Mat& v = t.nodes_[values].value;
                  const Mat& g = t.nodes_[id].grad;
                  Eigen::Index R = w.rows(), n = w.cols();
                  if (t.wants(weights)) {
                    Mat dw(R, n);
                    for (Eigen::Index r = 0; r < R; ++r)
                      for (Eigen::Index i = 0; i < n; ++i)
                        dw(r, i) = g.row(r).dot(v.row(r * n + i));
                    t.accum(weights, dw);
                  }
                  if (t.wants(values)) {
                    Mat dv(v.rows(), v.cols());
                    for (Eigen::Index r = 0; r < R; ++r)
                      for (Eigen::Index i = 0; i < n; ++i)
                        dv.row(r * n + i) = w(r, i) * g.row(r);
                    t.accum(values, dv);
                  }
                });
  }

  // ---- reverse sweep ----

  void backward(VarId loss) {
    Node& ln = nodes_[check(loss)];
    if (ln.value.rows() != 1 || ln.value.cols() != 1)
      throw std::invalid_argument("backward: loss must be 1x1");
    ln.grad = Mat::Constant(1, 1, S(1));
    for (VarId id = static_cast<VarId>(nodes_.size()) - 1; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this);
    }
  }

 private:
  std::vector<Node> nodes_;

  VarId check(VarId id) const {
    if (id < 0 || id >= static_cast<VarId>(nodes_.size()))
      throw std::invalid_argument("bad VarId");
    return id;
  }

  bool wants(VarId id) const { return nodes_[id].needs_grad; }

  VarId next_id() const { return static_cast<VarId>(nodes_.size()); }

  VarId push(Mat v, bool needs, std::function<void(Tape&)> bw) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs;
    n.backward = needs ? std::move(bw) : nullptr;
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size()) - 1;
  }

  template <typename Expr>
  void accum(VarId id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
  }

  void require_same_shape(VarId a, VarId b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }

  // A = sin(t)/t and B = (1-cos t)/t^2 from t^2. B uses 2 sin^2(t/2)/t^2
  // (cancellation-free); series only guards the 0/0 at t = 0.
  static std::pair<S, S> rodrigues_ab(S t2) {
    if (t2 < S(1e-12)) return {S(1) - t2 / S(6), S(0.5) - t2 / S(24)};
    S th = std::sqrt(t2);
    S sh = std::sin(th / S(2));
    return {std::sin(th) / th, S(2) * sh * sh / t2};
  }

  // C = (cos t - A)/t^2 and E = (A - 2B)/t^2, so dA/du = C u, dB/du = E u.
  // Both differences cancel to O(t^2); series below t ~ 0.07 keeps float exact
  // where the direct form loses digits.
  static std::pair<S, S> rodrigues_ce(S t2, S A, S B) {
    if (t2 < S(5e-3)) {
      S t4 = t2 * t2;
      return {S(-1) / S(3) + t2 / S(30) - t4 / S(840),
              S(-1) / S(12) + t2 / S(180) - t4 / S(6720)};
    }
    return {(std::cos(std::sqrt(t2)) - A) / t2, (A - S(2) * B) / t2};
  }
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace sve::ad
