#include "ttc/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace ttc::ad {

namespace {

std::atomic<std::uint64_t> g_tape_counter{1};

void check_finite(const Tensor& t, const char* op) {
  for (std::size_t i = 0; i < t.values.size(); ++i)
    TTC_REQUIRE(std::isfinite(t.values[i]),
                op << ": non-finite input at index " << i << " (" << t.values[i] << ")");
}

struct AxisSplit {
  int outer, n, inner;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit sp{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) sp.outer *= s[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) sp.inner *= s[static_cast<std::size_t>(i)];
  return sp;
}

Shape drop_axis(const Shape& s, int axis) {
  Shape out;
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (i != axis) out.push_back(s[static_cast<std::size_t>(i)]);
  if (out.empty()) out.push_back(1);
  return out;
}

}  // namespace

const char* op_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::Tanh: return "tanh";
    case UnaryOp::Sigmoid: return "sigmoid";
    case UnaryOp::Relu: return "relu";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Log: return "log";
  }
  return "?";
}

const char* op_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "add";
    case BinaryOp::Sub: return "sub";
    case BinaryOp::Mul: return "mul";
    case BinaryOp::MatMul: return "matmul";
  }
  return "?";
}

const char* op_name(ReduceOp op) {
  switch (op) {
    case ReduceOp::Sum: return "sum";
    case ReduceOp::Mean: return "mean";
    case ReduceOp::Max: return "max";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// GradientMap

Tensor GradientMap::grad(const Tensor& t) const {
  TTC_REQUIRE(t.on_tape(), "grad: tensor is not on a tape");
  return grad(t.node_id);
}

Tensor GradientMap::grad(int node_id) const {
  TTC_REQUIRE(node_id >= 0 && node_id < tape_->node_count(),
              "grad: node id " << node_id << " out of range");
  const Shape& shape = tape_->node_shape(node_id);
  const auto& g = grads_[static_cast<std::size_t>(node_id)];
  if (g.empty()) return Tensor::zeros(shape);
  return Tensor(shape, g);
}

bool GradientMap::touched(int node_id) const {
  return node_id >= 0 && node_id < static_cast<int>(grads_.size()) &&
         !grads_[static_cast<std::size_t>(node_id)].empty();
}

std::vector<double>* GradientMap::slot(int node_id) {
  if (!tape_->node_requires_grad(node_id)) return nullptr;
  auto& g = grads_[static_cast<std::size_t>(node_id)];
  if (g.empty()) g.assign(tape_->vals(node_id).size(), 0.0);
  return &g;
}

// ---------------------------------------------------------------------------
// Tape plumbing

Tape::Tape() : tag_(g_tape_counter.fetch_add(1)) {}

void Tape::check_open(const char* what) const {
  TTC_REQUIRE(!backward_done_,
              what << ": tape already consumed by backward; start a fresh forward pass");
}

int Tape::record(Shape shape, std::vector<double> values, bool requires_grad, BackFn back) {
  check_open("record");
  Node n;
  n.shape = std::move(shape);
  n.values = std::move(values);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::wrap(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  Tensor t(n.shape, n.values);
  t.requires_grad = n.requires_grad;
  t.node_id = id;
  t.tape_tag = tag_;
  return t;
}

int Tape::intern(const Tensor& t) {
  if (t.on_tape()) {
    TTC_REQUIRE(t.tape_tag == tag_, "tensor belongs to a different tape");
    TTC_REQUIRE(t.node_id < node_count(), "stale node id " << t.node_id);
    return t.node_id;
  }
  return record(t.shape, t.values, false, nullptr);
}

Tensor Tape::leaf(const Tensor& t, bool requires_grad) {
  return wrap(record(t.shape, t.values, requires_grad, nullptr));
}

void Tape::clear() {
  nodes_.clear();
  nodes_.shrink_to_fit();
  backward_done_ = false;
}

GradientMap Tape::backward(const Tensor& loss) {
  TTC_REQUIRE(loss.on_tape() && loss.tape_tag == tag_, "backward: loss is not on this tape");
  TTC_REQUIRE(loss.size() == 1,
              "backward: loss must be scalar, got shape " << shape_str(loss.shape));
  check_open("backward");
  backward_done_ = true;

  GradientMap g(*this);
  g.grads_.resize(nodes_.size());
  if (std::vector<double>* seed = g.slot(loss.node_id)) {
    (*seed)[0] = 1.0;
    for (int id = loss.node_id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.back && g.touched(id)) n.back(*this, g.grads_[static_cast<std::size_t>(id)], g);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise unary

Tensor Tape::apply_unary(UnaryOp op, const Tensor& x) {
  check_finite(x, op_name(op));
  const int ix = intern(x);
  const std::vector<double>& xv = vals(ix);
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    switch (op) {
      case UnaryOp::Tanh: y[i] = std::tanh(v); break;
      case UnaryOp::Sigmoid: y[i] = 1.0 / (1.0 + std::exp(-v)); break;
      case UnaryOp::Relu: y[i] = v > 0.0 ? v : 0.0; break;
      case UnaryOp::Exp: y[i] = std::exp(v); break;
      case UnaryOp::Log:
        TTC_REQUIRE(v > 0.0, "log: non-positive input at index " << i << " (" << v << ")");
        y[i] = std::log(v);
        break;
    }
  }

  BackFn back;
  if (req(ix)) {
    std::vector<double> yv = y;  // enough to reconstruct every adjoint below
    back = [=](Tape& t, const std::vector<double>& g, GradientMap& gm) {
      std::vector<double>* gx = gm.slot(ix);
      if (!gx) return;
      const std::vector<double>& xin = t.vals(ix);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = 0.0;
        switch (op) {
          case UnaryOp::Tanh: d = 1.0 - yv[i] * yv[i]; break;
          case UnaryOp::Sigmoid: d = yv[i] * (1.0 - yv[i]); break;
          case UnaryOp::Relu: d = xin[i] > 0.0 ? 1.0 : 0.0; break;
          case UnaryOp::Exp: d = yv[i]; break;
          case UnaryOp::Log: d = 1.0 / xin[i]; break;
        }
        (*gx)[i] += g[i] * d;
      }
    };
  }
  return wrap(record(x.shape, std::move(y), req(ix), std::move(back)));
}

// ---------------------------------------------------------------------------
// Elementwise binary and matmul

Tensor Tape::apply_binary(BinaryOp op, const Tensor& a, const Tensor& b) {
  const int ia = intern(a);
  const int ib = intern(b);
  const bool out_req = req(ia) || req(ib);

  if (op == BinaryOp::MatMul) {
    const Shape& sa = a.shape;
    const Shape& sb = b.shape;
    TTC_REQUIRE(sa.size() <= 2 && sb.size() <= 2,
                "matmul: rank > 2 unsupported, got " << shape_str(sa) << " and " << shape_str(sb));
    const int am = sa.size() == 2 ? sa[0] : 1;
    const int an = sa.size() == 2 ? sa[1] : sa[0];
    const int bn = sb.size() == 2 ? sb[0] : sb[0];
    const int bp = sb.size() == 2 ? sb[1] : 1;
    TTC_REQUIRE(an == bn, "matmul: inner dimensions differ, " << shape_str(sa) << " vs " << shape_str(sb));

    Shape out_shape;
    if (sa.size() == 2 && sb.size() == 2) out_shape = {am, bp};
    else if (sa.size() == 2) out_shape = {am};       // (m,n)*(n) -> (m)
    else if (sb.size() == 2) out_shape = {bp};       // (n)*(n,p) -> (p)
    else out_shape = {1};                            // dot product

    const std::vector<double>& av = vals(ia);
    const std::vector<double>& bv = vals(ib);
    std::vector<double> y(static_cast<std::size_t>(shape_size(out_shape)), 0.0);
    for (int i = 0; i < am; ++i)
      for (int k = 0; k < an; ++k) {
        const double aik = av[static_cast<std::size_t>(i) * an + k];
        if (aik == 0.0) continue;
        const std::size_t yrow = static_cast<std::size_t>(i) * bp;
        const std::size_t brow = static_cast<std::size_t>(k) * bp;
        for (int j = 0; j < bp; ++j) y[yrow + j] += aik * bv[brow + j];
      }

    BackFn back;
    if (out_req) {
      const bool ra = req(ia), rb = req(ib);
      back = [=](Tape& t, const std::vector<double>& g, GradientMap& gm) {
        const std::vector<double>& A = t.vals(ia);
        const std::vector<double>& B = t.vals(ib);
        if (std::vector<double>* ga = ra ? gm.slot(ia) : nullptr) {
          // dA = G * B^T
          for (int i = 0; i < am; ++i)
            for (int k = 0; k < an; ++k) {
              double acc = 0.0;
              for (int j = 0; j < bp; ++j)
                acc += g[static_cast<std::size_t>(i) * bp + j] * B[static_cast<std::size_t>(k) * bp + j];
              (*ga)[static_cast<std::size_t>(i) * an + k] += acc;
            }
        }
        if (std::vector<double>* gb = rb ? gm.slot(ib) : nullptr) {
          // dB = A^T * G
          for (int k = 0; k < an; ++k)
            for (int j = 0; j < bp; ++j) {
              double acc = 0.0;
              for (int i = 0; i < am; ++i)
                acc += A[static_cast<std::size_t>(i) * an + k] * g[static_cast<std::size_t>(i) * bp + j];
              (*gb)[static_cast<std::size_t>(k) * bp + j] += acc;
            }
        }
      };
    }
    return wrap(record(std::move(out_shape), std::move(y), out_req, std::move(back)));
  }

  // Elementwise with scalar broadcast of either side.
  const int na = a.size();
  const int nb = b.size();
  const bool a_scalar = na == 1 && nb != 1;
  const bool b_scalar = nb == 1 && na != 1;
  TTC_REQUIRE(a_scalar || b_scalar || a.shape == b.shape,
              op_name(op) << ": shape mismatch " << shape_str(a.shape) << " vs " << shape_str(b.shape));
  const Shape out_shape = a_scalar ? b.shape : a.shape;
  const int n = shape_size(out_shape);

  const std::vector<double>& av = vals(ia);
  const std::vector<double>& bv = vals(ib);
  std::vector<double> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double x1 = av[a_scalar ? 0 : static_cast<std::size_t>(i)];
    const double x2 = bv[b_scalar ? 0 : static_cast<std::size_t>(i)];
    switch (op) {
      case BinaryOp::Add: y[static_cast<std::size_t>(i)] = x1 + x2; break;
      case BinaryOp::Sub: y[static_cast<std::size_t>(i)] = x1 - x2; break;
      case BinaryOp::Mul: y[static_cast<std::size_t>(i)] = x1 * x2; break;
      case BinaryOp::MatMul: break;  // unreachable
    }
  }

  BackFn back;
  if (out_req) {
    const bool ra = req(ia), rb = req(ib);
    back = [=](Tape& t, const std::vector<double>& g, GradientMap& gm) {
      const std::vector<double>& A = t.vals(ia);
      const std::vector<double>& B = t.vals(ib);
      if (std::vector<double>* ga = ra ? gm.slot(ia) : nullptr) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          double d = g[i];
          if (op == BinaryOp::Mul) d *= B[b_scalar ? 0 : i];
          (*ga)[a_scalar ? 0 : i] += d;
        }
      }
      if (std::vector<double>* gb = rb ? gm.slot(ib) : nullptr) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          double d = g[i];
          if (op == BinaryOp::Sub) d = -d;
          if (op == BinaryOp::Mul) d = g[i] * A[a_scalar ? 0 : i];
          (*gb)[b_scalar ? 0 : i] += d;
        }
      }
    };
  }
  return wrap(record(out_shape, std::move(y), out_req, std::move(back)));
}

// ---------------------------------------------------------------------------
// Reductions

Tensor Tape::reduce(ReduceOp op, const Tensor& x, int axis) {
  TTC_REQUIRE(axis >= 0 && axis < x.rank(),
              op_name(op) << ": axis " << axis << " out of range for shape " << shape_str(x.shape));
  const AxisSplit sp = split_axis(x.shape, axis);
  TTC_REQUIRE(sp.n > 0, op_name(op) << ": empty axis extent");

  const int ix = intern(x);
  const std::vector<double>& xv = vals(ix);
  const Shape out_shape = drop_axis(x.shape, axis);
  std::vector<double> y(static_cast<std::size_t>(sp.outer) * sp.inner, 0.0);
  std::vector<int> argmax;
  if (op == ReduceOp::Max) argmax.assign(y.size(), 0);

  for (int o = 0; o < sp.outer; ++o)
    for (int in = 0; in < sp.inner; ++in) {
      const std::size_t oi = static_cast<std::size_t>(o) * sp.inner + in;
      double acc = op == ReduceOp::Max ? -1e308 : 0.0;
      for (int k = 0; k < sp.n; ++k) {
        const double v = xv[(static_cast<std::size_t>(o) * sp.n + k) * sp.inner + in];
        if (op == ReduceOp::Max) {
          if (v > acc) {
            acc = v;
            argmax[oi] = k;
          }
        } else {
          acc += v;
        }
      }
      if (op == ReduceOp::Mean) acc /= sp.n;
      y[oi] = acc;
    }

  BackFn back;
  if (req(ix)) {
    back = [=](Tape&, const std::vector<double>& g, GradientMap& gm) {
      std::vector<double>* gx = gm.slot(ix);
      if (!gx) return;
      for (int o = 0; o < sp.outer; ++o)
        for (int in = 0; in < sp.inner; ++in) {
          const std::size_t oi = static_cast<std::size_t>(o) * sp.inner + in;
          if (op == ReduceOp::Max) {
            (*gx)[(static_cast<std::size_t>(o) * sp.n + argmax[oi]) * sp.inner + in] += g[oi];
          } else {
            const double d = op == ReduceOp::Mean ? g[oi] / sp.n : g[oi];
            for (int k = 0; k < sp.n; ++k)
              (*gx)[(static_cast<std::size_t>(o) * sp.n + k) * sp.inner + in] += d;
          }
        }
    };
  }
  return wrap(record(out_shape, std::move(y), req(ix), std::move(back)));
}

// ---------------------------------------------------------------------------
// Softmax and losses

Tensor Tape::softmax(const Tensor& x, int axis) {
  check_finite(x, "softmax");
  TTC_REQUIRE(axis >= 0 && axis < x.rank(),
              "softmax: axis " << axis << " out of range for shape " << shape_str(x.shape));
  const AxisSplit sp = split_axis(x.shape, axis);
  TTC_REQUIRE(sp.n > 0, "softmax: empty axis extent");

  const int ix = intern(x);
  const std::vector<double>& xv = vals(ix);
  std::vector<double> y(xv.size());
  for (int o = 0; o < sp.outer; ++o)
    for (int in = 0; in < sp.inner; ++in) {
      double m = -1e308;
      for (int k = 0; k < sp.n; ++k)
        m = std::max(m, xv[(static_cast<std::size_t>(o) * sp.n + k) * sp.inner + in]);
      double s = 0.0;
      for (int k = 0; k < sp.n; ++k) {
        const std::size_t idx = (static_cast<std::size_t>(o) * sp.n + k) * sp.inner + in;
        y[idx] = std::exp(xv[idx] - m);
        s += y[idx];
      }
      for (int k = 0; k < sp.n; ++k) y[(static_cast<std::size_t>(o) * sp.n + k) * sp.inner + in] /= s;
    }

  BackFn back;
  if (req(ix)) {
    std::vector<double> yv = y;
    back = [=](Tape&, const std::vector<double>& g, GradientMap& gm) {
      std::vector<double>* gx = gm.slot(ix);
      if (!gx) return;
      for (int o = 0; o < sp.outer; ++o)
        for (int in = 0; in < sp.inner; ++in) {
          double dot = 0.0;
          for (int k = 0; k < sp.n; ++k) {
            const std::size_t idx = (static_cast<std::size_t>(o) * sp.n + k) * sp.inner + in;
            dot += g[idx] * yv[idx];
          }
          for (int k = 0; k < sp.n; ++k) {
            const std::size_t idx = (static_cast<std::size_t>(o) * sp.n + k) * sp.inner + in;
            (*gx)[idx] += yv[idx] * (g[idx] - dot);
          }
        }
    };
  }
  return wrap(record(x.shape, std::move(y), req(ix), std::move(back)));
}

Tensor Tape::cross_entropy(const Tensor& logits, int target) {
  check_finite(logits, "cross_entropy");
  TTC_REQUIRE(logits.rank() == 1, "cross_entropy: logits must be 1-D, got " << shape_str(logits.shape));
  const int v = logits.size();
  TTC_REQUIRE(target >= 0 && target < v,
              "cross_entropy: target " << target << " out of range for " << v << " classes");

  const int ix = intern(logits);
  const std::vector<double>& z = vals(ix);
  double m = -1e308;
  for (const double zi : z) m = std::max(m, zi);
  double s = 0.0;
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    s += p[i];
  }
  for (double& pi : p) pi /= s;
  const double loss = m + std::log(s) - z[static_cast<std::size_t>(target)];

  BackFn back;
  if (req(ix)) {
    back = [=](Tape&, const std::vector<double>& g, GradientMap& gm) {
      std::vector<double>* gx = gm.slot(ix);
      if (!gx) return;
      for (std::size_t i = 0; i < p.size(); ++i)
        (*gx)[i] += g[0] * (p[i] - (static_cast<int>(i) == target ? 1.0 : 0.0));
    };
  }
  return wrap(record({1}, {loss}, req(ix), std::move(back)));
}

Tensor Tape::smooth_l1(const Tensor& pred, const Tensor& target) {
  TTC_REQUIRE(pred.shape == target.shape,
              "smooth_l1: shape mismatch " << shape_str(pred.shape) << " vs " << shape_str(target.shape));
  const int ip = intern(pred);
  const std::vector<double>& pv = vals(ip);
  const std::vector<double>& tv = target.values;
  const int n = pred.size();
  TTC_REQUIRE(n > 0, "smooth_l1: empty input");

  double acc = 0.0;
  std::vector<double> deriv(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double d = pv[static_cast<std::size_t>(i)] - tv[static_cast<std::size_t>(i)];
    const double ad = std::abs(d);
    acc += ad < 1.0 ? 0.5 * d * d : ad - 0.5;
    deriv[static_cast<std::size_t>(i)] = std::clamp(d, -1.0, 1.0) / n;
  }

  BackFn back;
  if (req(ip)) {
    back = [=](Tape&, const std::vector<double>& g, GradientMap& gm) {
      std::vector<double>* gp = gm.slot(ip);
      if (!gp) return;
      for (std::size_t i = 0; i < deriv.size(); ++i) (*gp)[i] += g[0] * deriv[i];
    };
  }
  return wrap(record({1}, {acc / n}, req(ip), std::move(back)));
}

Tensor Tape::embedding_lookup(const Tensor& table, const std::vector<int>& indices) {
  TTC_REQUIRE(table.rank() == 2, "embedding_lookup: table must be 2-D, got " << shape_str(table.shape));
  const int v = table.dim(0);
  const int e = table.dim(1);
  for (std::size_t i = 0; i < indices.size(); ++i)
    TTC_REQUIRE(indices[i] >= 0 && indices[i] < v,
                "embedding_lookup: index " << indices[i] << " at position " << i
                                           << " out of range for table of " << v << " rows");

  const int it = intern(table);
  const std::vector<double>& tv = vals(it);
  const int l = static_cast<int>(indices.size());
  std::vector<double> y(static_cast<std::size_t>(l) * e);
  for (int r = 0; r < l; ++r)
    std::copy_n(tv.begin() + static_cast<std::size_t>(indices[static_cast<std::size_t>(r)]) * e, e,
                y.begin() + static_cast<std::size_t>(r) * e);

  BackFn back;
  if (req(it)) {
    std::vector<int> idx = indices;
    back = [=](Tape&, const std::vector<double>& g, GradientMap& gm) {
      std::vector<double>* gt = gm.slot(it);
      if (!gt) return;
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < e; ++c)
          (*gt)[static_cast<std::size_t>(idx[r]) * e + c] += g[r * static_cast<std::size_t>(e) + c];
    };
  }
  return wrap(record({l, e}, std::move(y), req(it), std::move(back)));
}

Tensor Tape::bce_with_logits(const Tensor& logits, const Tensor& targets) {
  TTC_REQUIRE(logits.shape == targets.shape,
              "bce_with_logits: shape mismatch " << shape_str(logits.shape) << " vs "
                                                 << shape_str(targets.shape));
  const int iz = intern(logits);
  const std::vector<double>& z = vals(iz);
  const std::vector<double>& yv = targets.values;
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    out[i] = std::max(zi, 0.0) - zi * yv[i] + std::log1p(std::exp(-std::abs(zi)));
  }

  BackFn back;
  if (req(iz)) {
    std::vector<double> tv = yv;
    back = [=](Tape& t, const std::vector<double>& g, GradientMap& gm) {
      std::vector<double>* gz = gm.slot(iz);
      if (!gz) return;
      const std::vector<double>& zin = t.vals(iz);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-zin[i]));
        (*gz)[i] += g[i] * (s - tv[i]);
      }
    };
  }
  return wrap(record(logits.shape, std::move(out), req(iz), std::move(back)));
}

// ---------------------------------------------------------------------------
// Structural ops

Tensor Tape::concat(const std::vector<Tensor>& parts) {
  TTC_REQUIRE(!parts.empty(), "concat: empty input list");
  std::vector<int> ids;
  std::vector<int> sizes;
  int total = 0;
  bool out_req = false;
  for (const Tensor& p : parts) {
    TTC_REQUIRE(p.rank() == 1, "concat: all parts must be 1-D, got " << shape_str(p.shape));
    ids.push_back(intern(p));
    sizes.push_back(p.size());
    total += p.size();
    out_req = out_req || req(ids.back());
  }
  std::vector<double> y;
  y.reserve(static_cast<std::size_t>(total));
  for (const int id : ids) {
    const std::vector<double>& v = vals(id);
    y.insert(y.end(), v.begin(), v.end());
  }

  BackFn back;
  if (out_req) {
    back = [=](Tape&, const std::vector<double>& g, GradientMap& gm) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (std::vector<double>* gp = gm.slot(ids[k]))
          for (int i = 0; i < sizes[k]; ++i) (*gp)[static_cast<std::size_t>(i)] += g[off + i];
        off += static_cast<std::size_t>(sizes[k]);
      }
    };
  }
  return wrap(record({total}, std::move(y), out_req, std::move(back)));
}

Tensor Tape::slice(const Tensor& x, int start, int len) {
  TTC_REQUIRE(x.rank() == 1, "slice: input must be 1-D, got " << shape_str(x.shape));
  TTC_REQUIRE(start >= 0 && len >= 1 && start + len <= x.size(),
              "slice: range [" << start << ", " << start + len << ") out of bounds for size " << x.size());
  const int ix = intern(x);
  const std::vector<double>& xv = vals(ix);
  std::vector<double> y(xv.begin() + start, xv.begin() + start + len);

  BackFn back;
  if (req(ix)) {
    back = [=](Tape&, const std::vector<double>& g, GradientMap& gm) {
      if (std::vector<double>* gx = gm.slot(ix))
        for (int i = 0; i < len; ++i) (*gx)[static_cast<std::size_t>(start + i)] += g[static_cast<std::size_t>(i)];
    };
  }
  return wrap(record({len}, std::move(y), req(ix), std::move(back)));
}

Tensor Tape::row(const Tensor& x, int r) {
  TTC_REQUIRE(x.rank() == 2, "row: input must be 2-D, got " << shape_str(x.shape));
  TTC_REQUIRE(r >= 0 && r < x.dim(0), "row: index " << r << " out of range for " << x.dim(0) << " rows");
  const int ix = intern(x);
  const int c = x.dim(1);
  const std::vector<double>& xv = vals(ix);
  std::vector<double> y(xv.begin() + static_cast<std::size_t>(r) * c,
                        xv.begin() + static_cast<std::size_t>(r + 1) * c);

  BackFn back;
  if (req(ix)) {
    back = [=](Tape&, const std::vector<double>& g, GradientMap& gm) {
      if (std::vector<double>* gx = gm.slot(ix))
        for (int i = 0; i < c; ++i) (*gx)[static_cast<std::size_t>(r) * c + i] += g[static_cast<std::size_t>(i)];
    };
  }
  return wrap(record({c}, std::move(y), req(ix), std::move(back)));
}

Tensor Tape::stack_rows(const std::vector<Tensor>& rows) {
  TTC_REQUIRE(!rows.empty(), "stack_rows: empty input list");
  const int c = rows.front().size();
  std::vector<int> ids;
  bool out_req = false;
  for (const Tensor& r : rows) {
    TTC_REQUIRE(r.rank() == 1 && r.size() == c,
                "stack_rows: all rows must be 1-D of size " << c << ", got " << shape_str(r.shape));
    ids.push_back(intern(r));
    out_req = out_req || req(ids.back());
  }
  const int n = static_cast<int>(rows.size());
  std::vector<double> y;
  y.reserve(static_cast<std::size_t>(n) * c);
  for (const int id : ids) {
    const std::vector<double>& v = vals(id);
    y.insert(y.end(), v.begin(), v.end());
  }

  BackFn back;
  if (out_req) {
    back = [=](Tape&, const std::vector<double>& g, GradientMap& gm) {
      for (std::size_t k = 0; k < ids.size(); ++k)
        if (std::vector<double>* gr = gm.slot(ids[k]))
          for (int i = 0; i < c; ++i) (*gr)[static_cast<std::size_t>(i)] += g[k * static_cast<std::size_t>(c) + i];
    };
  }
  return wrap(record({n, c}, std::move(y), out_req, std::move(back)));
}

Tensor Tape::scale_rows(const Tensor& x, const Tensor& a) {
  TTC_REQUIRE(x.rank() == 2, "scale_rows: features must be 2-D, got " << shape_str(x.shape));
  TTC_REQUIRE(a.rank() == 1 && a.size() == x.dim(0),
              "scale_rows: weight length " << shape_str(a.shape) << " does not match " << x.dim(0) << " rows");
  const int ix = intern(x);
  const int ia = intern(a);
  const int t = x.dim(0);
  const int c = x.dim(1);
  const std::vector<double>& xv = vals(ix);
  const std::vector<double>& av = vals(ia);
  std::vector<double> y(xv.size());
  for (int r = 0; r < t; ++r)
    for (int j = 0; j < c; ++j)
      y[static_cast<std::size_t>(r) * c + j] = av[static_cast<std::size_t>(r)] * xv[static_cast<std::size_t>(r) * c + j];

  const bool out_req = req(ix) || req(ia);
  BackFn back;
  if (out_req) {
    back = [=](Tape& tp, const std::vector<double>& g, GradientMap& gm) {
      const std::vector<double>& X = tp.vals(ix);
      const std::vector<double>& A = tp.vals(ia);
      if (std::vector<double>* gx = gm.slot(ix))
        for (int r = 0; r < t; ++r)
          for (int j = 0; j < c; ++j)
            (*gx)[static_cast<std::size_t>(r) * c + j] += g[static_cast<std::size_t>(r) * c + j] * A[static_cast<std::size_t>(r)];
      if (std::vector<double>* ga = gm.slot(ia))
        for (int r = 0; r < t; ++r) {
          double acc = 0.0;
          for (int j = 0; j < c; ++j)
            acc += g[static_cast<std::size_t>(r) * c + j] * X[static_cast<std::size_t>(r) * c + j];
          (*ga)[static_cast<std::size_t>(r)] += acc;
        }
    };
  }
  return wrap(record(x.shape, std::move(y), out_req, std::move(back)));
}

Tensor Tape::conv1d_k3(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  TTC_REQUIRE(x.rank() == 2, "conv1d: input must be 2-D, got " << shape_str(x.shape));
  const int t = x.dim(0);
  const int c = x.dim(1);
  TTC_REQUIRE(w.rank() == 2 && w.dim(0) == 3 * c,
              "conv1d: weight must be [3*" << c << " x F], got " << shape_str(w.shape));
  const int f = w.dim(1);
  TTC_REQUIRE(b.rank() == 1 && b.size() == f,
              "conv1d: bias must be [" << f << "], got " << shape_str(b.shape));
  TTC_REQUIRE(stride >= 1, "conv1d: stride must be >= 1, got " << stride);

  const int ix = intern(x);
  const int iw = intern(w);
  const int ib = intern(b);
  const int n = (t + stride - 1) / stride;  // centers at 0, stride, 2*stride, ... < t

  const std::vector<double>& xv = vals(ix);
  const std::vector<double>& wv = vals(iw);
  const std::vector<double>& bv = vals(ib);
  std::vector<double> y(static_cast<std::size_t>(n) * f);
  for (int i = 0; i < n; ++i) {
    const int center = i * stride;
    for (int j = 0; j < f; ++j) y[static_cast<std::size_t>(i) * f + j] = bv[static_cast<std::size_t>(j)];
    for (int k = -1; k <= 1; ++k) {
      const int pos = center + k;
      if (pos < 0 || pos >= t) continue;  // zero padding
      const std::size_t xoff = static_cast<std::size_t>(pos) * c;
      const std::size_t woff = static_cast<std::size_t>(k + 1) * c;
      for (int cc = 0; cc < c; ++cc) {
        const double xval = xv[xoff + cc];
        if (xval == 0.0) continue;
        const std::size_t wrow = (woff + cc) * f;
        for (int j = 0; j < f; ++j) y[static_cast<std::size_t>(i) * f + j] += xval * wv[wrow + j];
      }
    }
  }

  const bool out_req = req(ix) || req(iw) || req(ib);
  BackFn back;
  if (out_req) {
    back = [=](Tape& tp, const std::vector<double>& g, GradientMap& gm) {
      const std::vector<double>& X = tp.vals(ix);
      const std::vector<double>& W = tp.vals(iw);
      std::vector<double>* gx = gm.slot(ix);
      std::vector<double>* gw = gm.slot(iw);
      std::vector<double>* gb = gm.slot(ib);
      for (int i = 0; i < n; ++i) {
        const int center = i * stride;
        const std::size_t grow = static_cast<std::size_t>(i) * f;
        if (gb)
          for (int j = 0; j < f; ++j) (*gb)[static_cast<std::size_t>(j)] += g[grow + j];
        for (int k = -1; k <= 1; ++k) {
          const int pos = center + k;
          if (pos < 0 || pos >= t) continue;
          const std::size_t xoff = static_cast<std::size_t>(pos) * c;
          const std::size_t woff = static_cast<std::size_t>(k + 1) * c;
          for (int cc = 0; cc < c; ++cc) {
            const std::size_t wrow = (woff + cc) * f;
            double gxacc = 0.0;
            for (int j = 0; j < f; ++j) {
              const double gij = g[grow + j];
              gxacc += gij * W[wrow + j];
              if (gw) (*gw)[wrow + j] += gij * X[xoff + cc];
            }
            if (gx) (*gx)[xoff + cc] += gxacc;
          }
        }
      }
    };
  }
  return wrap(record({n, f}, std::move(y), out_req, std::move(back)));
}

Tensor Tape::roi_bin_maxpool(const Tensor& x, int lo, int hi, int bins) {
  TTC_REQUIRE(x.rank() == 2, "roi_bin_maxpool: input must be 2-D, got " << shape_str(x.shape));
  const int t = x.dim(0);
  const int c = x.dim(1);
  TTC_REQUIRE(bins >= 1, "roi_bin_maxpool: bins must be >= 1, got " << bins);
  TTC_REQUIRE(lo >= 0 && lo <= hi && hi < t,
              "roi_bin_maxpool: span [" << lo << ", " << hi << "] out of range for " << t << " rows");

  const int ix = intern(x);
  const std::vector<double>& xv = vals(ix);
  const int span = hi - lo + 1;
  std::vector<double> y(static_cast<std::size_t>(bins) * c, -1e308);
  std::vector<int> argrow(y.size(), -1);
  for (int b = 0; b < bins; ++b) {
    const int blo = lo + static_cast<int>((static_cast<long long>(b) * span) / bins);
    int bhi = lo + static_cast<int>((static_cast<long long>(b + 1) * span) / bins) - 1;
    if (bhi < blo) bhi = blo;  // clamp keeps every bin nonempty
    for (int r = blo; r <= bhi; ++r)
      for (int j = 0; j < c; ++j) {
        const double v = xv[static_cast<std::size_t>(r) * c + j];
        const std::size_t oi = static_cast<std::size_t>(b) * c + j;
        if (v > y[oi]) {
          y[oi] = v;
          argrow[oi] = r;
        }
      }
  }

  BackFn back;
  if (req(ix)) {
    back = [=](Tape&, const std::vector<double>& g, GradientMap& gm) {
      std::vector<double>* gx = gm.slot(ix);
      if (!gx) return;
      for (int b = 0; b < bins; ++b)
        for (int j = 0; j < c; ++j) {
          const std::size_t oi = static_cast<std::size_t>(b) * c + j;
          (*gx)[static_cast<std::size_t>(argrow[oi]) * c + j] += g[oi];
        }
    };
  }
  return wrap(record({bins * c}, std::move(y), req(ix), std::move(back)));
}

}  // namespace ttc::ad
