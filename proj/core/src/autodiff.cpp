#include "wimp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "wimp/error.hpp"

namespace wimp::ad {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_error(const char* op, const Tape& t, Var a, Var b) {
  std::ostringstream os;
  os << op << ": incompatible shapes [" << t.rows(a) << "x" << t.cols(a) << "] and ["
     << t.rows(b) << "x" << t.cols(b) << "]";
  throw Error(ErrorCode::kShapeMismatch, os.str());
}

inline double sigmoid_scalar(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_)) {
    throw Error(ErrorCode::kShapeMismatch, "tensor of shape " + shape_string(shape_) + " given " +
                                               std::to_string(values_.size()) + " values");
  }
}

std::size_t Tensor::rows() const noexcept {
  if (shape_.empty()) return 1;
  return shape_[0];
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.size() < 2) return 1;
  return shape_[1];
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() {
  nodes_.reserve(1024);
  values_.reserve(1 << 15);
}

Var Tape::push(Op op, std::size_t rows, std::size_t cols, std::initializer_list<Var> inputs,
               std::size_t aux_size, double scalar) {
  return push_links(op, rows, cols, std::span<const Var>(inputs.begin(), inputs.size()), aux_size,
                    scalar);
}

Var Tape::push_links(Op op, std::size_t rows, std::size_t cols, std::span<const Var> inputs,
                     std::size_t aux_size, double scalar) {
  Node n{};
  n.op = op;
  n.rows = static_cast<std::uint32_t>(rows);
  n.cols = static_cast<std::uint32_t>(cols);
  n.in0 = inputs.size() > 0 ? inputs[0].id : UINT32_MAX;
  n.in1 = inputs.size() > 1 ? inputs[1].id : UINT32_MAX;
  n.value_offset = values_.size();
  n.aux_offset = aux_.size();
  n.link_offset = static_cast<std::uint32_t>(links_.size());
  n.link_count = static_cast<std::uint32_t>(inputs.size());
  n.scalar = scalar;
  n.param_id = -1;
  n.needs_grad = false;
  for (const Var& v : inputs) {
    links_.push_back(v.id);
    n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
  }
  values_.resize(values_.size() + rows * cols);
  aux_.resize(aux_.size() + aux_size);
  nodes_.push_back(n);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(const Tensor& t) {
  return constant(t.values(), t.rows(), t.cols());
}

Var Tape::constant(std::span<const double> values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols) {
    throw Error(ErrorCode::kShapeMismatch, "constant: value count does not match shape");
  }
  Var v = push(Op::kConstant, rows, cols, {});
  std::copy(values.begin(), values.end(), mutable_value(v));
  return v;
}

Var Tape::constant_scalar(double v) {
  return constant(std::span<const double>(&v, 1), 1, 1);
}

Var Tape::parameter(int param_id, const Tensor& t) {
  Var v = push(Op::kParameter, t.rows(), t.cols(), {});
  std::copy(t.values().begin(), t.values().end(), mutable_value(v));
  nodes_[v.id].param_id = param_id;
  nodes_[v.id].needs_grad = true;
  param_nodes_.push_back(v.id);
  return v;
}

std::span<const double> Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return {values_.data() + n.value_offset, static_cast<std::size_t>(n.rows) * n.cols};
}

Tensor Tape::tensor(Var v) const {
  auto span = value(v);
  const Node& n = nodes_[v.id];
  std::vector<double> vals(span.begin(), span.end());
  if (n.cols == 1) return Tensor({n.rows}, std::move(vals));
  return Tensor({n.rows, n.cols}, std::move(vals));
}

std::span<const double> Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!backward_done_) return {};
  return {grads_.data() + n.value_offset, static_cast<std::size_t>(n.rows) * n.cols};
}

std::vector<Tape::ParamGrad> Tape::parameter_gradients() const {
  std::vector<ParamGrad> out;
  out.reserve(param_nodes_.size());
  for (auto id : param_nodes_) {
    out.push_back({nodes_[id].param_id, grad(Var{id})});
  }
  return out;
}

void Tape::backward(Var loss) {
  const Node& ln = nodes_[loss.id];
  if (ln.rows != 1 || ln.cols != 1) {
    throw Error(ErrorCode::kNonScalarLoss, "backward needs a 1x1 loss, got [" +
                                               std::to_string(ln.rows) + "x" +
                                               std::to_string(ln.cols) + "]");
  }
  grads_.assign(values_.size(), 0.0);
  std::vector<char> touched(nodes_.size(), 0);
  grads_[ln.value_offset] = 1.0;
  touched[loss.id] = 1;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    if (!touched[id] || !nodes_[id].needs_grad) continue;
    const Node& n = nodes_[id];
    for (std::uint32_t k = 0; k < n.link_count; ++k) touched[links_[n.link_offset + k]] = 1;
    backward_node(id);
  }
  backward_done_ = true;
}

// ---------------------------------------------------------------------------
// Adjoint rules

void Tape::backward_node(std::uint32_t id) {
  const Node& n = nodes_[id];
  const std::size_t count = static_cast<std::size_t>(n.rows) * n.cols;
  const double* g = grad_ptr(id);
  const double* out = val_ptr(id);
  auto needs = [&](std::uint32_t in) { return in != UINT32_MAX && nodes_[in].needs_grad; };

  switch (n.op) {
    case Op::kConstant:
    case Op::kParameter:
      break;
    case Op::kMatMul: {
      const Node& a = nodes_[n.in0];
      const Node& b = nodes_[n.in1];
      const std::size_t m = a.rows, k = a.cols, p = b.cols;
      const double* av = val_ptr(n.in0);
      const double* bv = val_ptr(n.in1);
      if (needs(n.in0)) {
        double* ga = grad_ptr(n.in0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < p; ++j) {
            const double gij = g[i * p + j];
            if (gij == 0.0) continue;
            double* row = ga + i * k;
            for (std::size_t l = 0; l < k; ++l) row[l] += gij * bv[l * p + j];
          }
        }
      }
      if (needs(n.in1)) {
        double* gb = grad_ptr(n.in1);
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = av + i * k;
          const double* grow = g + i * p;
          for (std::size_t l = 0; l < k; ++l) {
            const double a_il = arow[l];
            double* brow = gb + l * p;
            for (std::size_t j = 0; j < p; ++j) brow[j] += a_il * grow[j];
          }
        }
      }
      break;
    }
    case Op::kTranspose: {
      double* ga = grad_ptr(n.in0);
      const std::size_t r = n.rows, c = n.cols;  // output shape
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[j * r + i] += g[i * c + j];
      break;
    }
    case Op::kAdd: {
      if (needs(n.in0)) {
        double* ga = grad_ptr(n.in0);
        for (std::size_t i = 0; i < count; ++i) ga[i] += g[i];
      }
      if (needs(n.in1)) {
        double* gb = grad_ptr(n.in1);
        for (std::size_t i = 0; i < count; ++i) gb[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      if (needs(n.in0)) {
        double* ga = grad_ptr(n.in0);
        for (std::size_t i = 0; i < count; ++i) ga[i] += g[i];
      }
      if (needs(n.in1)) {
        double* gb = grad_ptr(n.in1);
        for (std::size_t i = 0; i < count; ++i) gb[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      const double* av = val_ptr(n.in0);
      const double* bv = val_ptr(n.in1);
      if (needs(n.in0)) {
        double* ga = grad_ptr(n.in0);
        for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * bv[i];
      }
      if (needs(n.in1)) {
        double* gb = grad_ptr(n.in1);
        for (std::size_t i = 0; i < count; ++i) gb[i] += g[i] * av[i];
      }
      break;
    }
    case Op::kScale: {
      double* ga = grad_ptr(n.in0);
      for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * n.scalar;
      break;
    }
    case Op::kMulScalar: {
      const double* av = val_ptr(n.in0);
      const double s = val_ptr(n.in1)[0];
      if (needs(n.in0)) {
        double* ga = grad_ptr(n.in0);
        for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * s;
      }
      if (needs(n.in1)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < count; ++i) acc += g[i] * av[i];
        grad_ptr(n.in1)[0] += acc;
      }
      break;
    }
    case Op::kConcat: {
      std::size_t offset = 0;
      for (std::uint32_t k = 0; k < n.link_count; ++k) {
        const std::uint32_t in = links_[n.link_offset + k];
        const std::size_t sz = static_cast<std::size_t>(nodes_[in].rows) * nodes_[in].cols;
        if (needs(in)) {
          double* gi = grad_ptr(in);
          for (std::size_t i = 0; i < sz; ++i) gi[i] += g[offset + i];
        }
        offset += sz;
      }
      break;
    }
    case Op::kSlice: {
      double* ga = grad_ptr(n.in0) + static_cast<std::size_t>(n.scalar) * n.cols;
      for (std::size_t i = 0; i < count; ++i) ga[i] += g[i];
      break;
    }
    case Op::kTanh: {
      double* ga = grad_ptr(n.in0);
      for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * (1.0 - out[i] * out[i]);
      break;
    }
    case Op::kSigmoid: {
      double* ga = grad_ptr(n.in0);
      for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * out[i] * (1.0 - out[i]);
      break;
    }
    case Op::kElu: {
      const double* av = val_ptr(n.in0);
      double* ga = grad_ptr(n.in0);
      for (std::size_t i = 0; i < count; ++i) {
        ga[i] += g[i] * (av[i] > 0.0 ? 1.0 : out[i] + n.scalar);
      }
      break;
    }
    case Op::kSoftmax: {
      double* ga = grad_ptr(n.in0);
      const std::size_t r = n.rows, c = n.cols;
      if (n.scalar == 0.0) {
        for (std::size_t j = 0; j < c; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < r; ++i) s += g[i * c + j] * out[i * c + j];
          for (std::size_t i = 0; i < r; ++i) ga[i * c + j] += out[i * c + j] * (g[i * c + j] - s);
        }
      } else {
        for (std::size_t i = 0; i < r; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * out[i * c + j];
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += out[i * c + j] * (g[i * c + j] - s);
        }
      }
      break;
    }
    case Op::kDot: {
      const std::size_t len = static_cast<std::size_t>(nodes_[n.in0].rows) * nodes_[n.in0].cols;
      const double* av = val_ptr(n.in0);
      const double* bv = val_ptr(n.in1);
      if (needs(n.in0)) {
        double* ga = grad_ptr(n.in0);
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[0] * bv[i];
      }
      if (needs(n.in1)) {
        double* gb = grad_ptr(n.in1);
        for (std::size_t i = 0; i < len; ++i) gb[i] += g[0] * av[i];
      }
      break;
    }
    case Op::kSum: {
      const std::size_t len = static_cast<std::size_t>(nodes_[n.in0].rows) * nodes_[n.in0].cols;
      double* ga = grad_ptr(n.in0);
      for (std::size_t i = 0; i < len; ++i) ga[i] += g[0];
      break;
    }
    case Op::kL1Distance: {
      const std::size_t len = static_cast<std::size_t>(nodes_[n.in0].rows) * nodes_[n.in0].cols;
      const double* av = val_ptr(n.in0);
      const double* bv = val_ptr(n.in1);
      // Subgradient 0 at a == b.
      for (std::size_t i = 0; i < len; ++i) {
        const double d = av[i] - bv[i];
        const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        if (needs(n.in0)) grad_ptr(n.in0)[i] += g[0] * s;
        if (needs(n.in1)) grad_ptr(n.in1)[i] -= g[0] * s;
      }
      break;
    }
    case Op::kDropout: {
      const double* mask = aux_.data() + n.aux_offset;
      double* ga = grad_ptr(n.in0);
      for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * mask[i];
      break;
    }
    case Op::kLstmCell: {
      // links: x, h, c, W, b; output [h'; c']; aux: i, f, g, o, tanh(c').
      const std::uint32_t xi = links_[n.link_offset + 0];
      const std::uint32_t hi = links_[n.link_offset + 1];
      const std::uint32_t ci = links_[n.link_offset + 2];
      const std::uint32_t wi = links_[n.link_offset + 3];
      const std::uint32_t bi = links_[n.link_offset + 4];
      const std::size_t H = n.rows / 2;
      const std::size_t in = static_cast<std::size_t>(nodes_[xi].rows);
      const std::size_t width = in + H;
      const double* a = aux_.data() + n.aux_offset;
      const double* ig = a;
      const double* fg = a + H;
      const double* gg = a + 2 * H;
      const double* og = a + 3 * H;
      const double* tc = a + 4 * H;
      const double* cprev = val_ptr(ci);
      const double* dh = g;
      const double* dc_out = g + H;
      std::vector<double> dz(4 * H);
      double* gc = needs(ci) ? grad_ptr(ci) : nullptr;
      for (std::size_t j = 0; j < H; ++j) {
        const double dct = dc_out[j] + dh[j] * og[j] * (1.0 - tc[j] * tc[j]);
        dz[j] = dct * gg[j] * ig[j] * (1.0 - ig[j]);
        dz[H + j] = dct * cprev[j] * fg[j] * (1.0 - fg[j]);
        dz[2 * H + j] = dct * ig[j] * (1.0 - gg[j] * gg[j]);
        dz[3 * H + j] = dh[j] * tc[j] * og[j] * (1.0 - og[j]);
        if (gc) gc[j] += dct * fg[j];
      }
      const double* W = val_ptr(wi);
      const double* xv = val_ptr(xi);
      const double* hv = val_ptr(hi);
      if (needs(wi)) {
        double* gw = grad_ptr(wi);
        for (std::size_t r = 0; r < 4 * H; ++r) {
          const double d = dz[r];
          if (d == 0.0) continue;
          double* row = gw + r * width;
          for (std::size_t l = 0; l < in; ++l) row[l] += d * xv[l];
          for (std::size_t l = 0; l < H; ++l) row[in + l] += d * hv[l];
        }
      }
      if (needs(bi)) {
        double* gb = grad_ptr(bi);
        for (std::size_t r = 0; r < 4 * H; ++r) gb[r] += dz[r];
      }
      const bool nx = needs(xi), nh = needs(hi);
      if (nx || nh) {
        double* gx = nx ? grad_ptr(xi) : nullptr;
        double* gh = nh ? grad_ptr(hi) : nullptr;
        for (std::size_t r = 0; r < 4 * H; ++r) {
          const double d = dz[r];
          if (d == 0.0) continue;
          const double* row = W + r * width;
          if (gx)
            for (std::size_t l = 0; l < in; ++l) gx[l] += d * row[l];
          if (gh)
            for (std::size_t l = 0; l < H; ++l) gh[l] += d * row[in + l];
        }
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Forward ops

Var matmul(Tape& t, Var a, Var b) {
  if (t.cols(a) != t.rows(b)) shape_error("matmul", t, a, b);
  const std::size_t m = t.rows(a), k = t.cols(a), p = t.cols(b);
  Var out = t.push(Op::kMatMul, m, p, {a, b});
  const double* av = t.value(a).data();
  const double* bv = t.value(b).data();
  double* o = t.mutable_value(out);
  if (p == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = av + i * k;
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += row[l] * bv[l];
      o[i] = acc;
    }
    return out;
  }
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = o + i * p;
    for (std::size_t l = 0; l < k; ++l) {
      const double a_il = av[i * k + l];
      const double* brow = bv + l * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += a_il * brow[j];
    }
  }
  return out;
}

Var transpose(Tape& t, Var a) {
  const std::size_t r = t.rows(a), c = t.cols(a);
  Var out = t.push(Op::kTranspose, c, r, {a});
  const double* av = t.value(a).data();
  double* o = t.mutable_value(out);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) o[j * r + i] = av[i * c + j];
  return out;
}

namespace {

template <typename F>
Var binary_elementwise(Tape& t, Op op, const char* name, Var a, Var b, F f) {
  if (t.rows(a) != t.rows(b) || t.cols(a) != t.cols(b)) shape_error(name, t, a, b);
  Var out = t.push(op, t.rows(a), t.cols(a), {a, b});
  const double* av = t.value(a).data();
  const double* bv = t.value(b).data();
  double* o = t.mutable_value(out);
  const std::size_t n = t.size(a);
  for (std::size_t i = 0; i < n; ++i) o[i] = f(av[i], bv[i]);
  return out;
}

template <typename F>
Var unary_elementwise(Tape& t, Op op, Var a, F f, double scalar = 0.0) {
  Var out = t.push(op, t.rows(a), t.cols(a), {a}, 0, scalar);
  const double* av = t.value(a).data();
  double* o = t.mutable_value(out);
  const std::size_t n = t.size(a);
  for (std::size_t i = 0; i < n; ++i) o[i] = f(av[i]);
  return out;
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  return binary_elementwise(t, Op::kAdd, "add", a, b, [](double x, double y) { return x + y; });
}

Var sub(Tape& t, Var a, Var b) {
  return binary_elementwise(t, Op::kSub, "sub", a, b, [](double x, double y) { return x - y; });
}

Var mul(Tape& t, Var a, Var b) {
  return binary_elementwise(t, Op::kMul, "elementwise_mul", a, b,
                            [](double x, double y) { return x * y; });
}

Var scale(Tape& t, Var a, double s) {
  return unary_elementwise(t, Op::kScale, a, [s](double x) { return x * s; }, s);
}

Var mul_scalar(Tape& t, Var a, Var s) {
  if (t.size(s) != 1) shape_error("mul_scalar", t, a, s);
  const double sv = t.scalar(s);
  Var out = t.push(Op::kMulScalar, t.rows(a), t.cols(a), {a, s});
  const double* av = t.value(a).data();
  double* o = t.mutable_value(out);
  for (std::size_t i = 0; i < t.size(a); ++i) o[i] = av[i] * sv;
  return out;
}

Var concat(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::kShapeMismatch, "concat of zero tensors");
  const std::size_t c = t.cols(parts[0]);
  std::size_t r = 0;
  for (const Var& p : parts) {
    if (t.cols(p) != c) shape_error("concat", t, parts[0], p);
    r += t.rows(p);
  }
  Var out = t.push_links(Op::kConcat, r, c, parts);
  double* o = t.mutable_value(out);
  for (const Var& p : parts) {
    auto v = t.value(p);
    o = std::copy(v.begin(), v.end(), o);
  }
  return out;
}

Var concat(Tape& t, std::initializer_list<Var> parts) {
  return concat(t, std::span<const Var>(parts.begin(), parts.size()));
}

Var slice(Tape& t, Var a, std::size_t start, std::size_t count) {
  if (start + count > t.rows(a) || count == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "slice rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                    ") out of " + std::to_string(t.rows(a)));
  }
  const std::size_t c = t.cols(a);
  Var out = t.push(Op::kSlice, count, c, {a}, 0, static_cast<double>(start));
  auto v = t.value(a);
  std::copy(v.begin() + start * c, v.begin() + (start + count) * c, t.mutable_value(out));
  return out;
}

std::vector<Var> split(Tape& t, Var a, std::span<const std::size_t> sizes) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total != t.rows(a)) {
    throw Error(ErrorCode::kShapeMismatch, "split sizes do not sum to row count");
  }
  std::vector<Var> out;
  std::size_t start = 0;
  for (auto s : sizes) {
    out.push_back(slice(t, a, start, s));
    start += s;
  }
  return out;
}

Var tanh(Tape& t, Var a) {
  return unary_elementwise(t, Op::kTanh, a, [](double x) { return std::tanh(x); });
}

Var sigmoid(Tape& t, Var a) {
  return unary_elementwise(t, Op::kSigmoid, a, sigmoid_scalar);
}

Var elu(Tape& t, Var a, double alpha) {
  return unary_elementwise(
      t, Op::kElu, a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); }, alpha);
}

Var softmax(Tape& t, Var a, int axis) {
  if (axis != 0 && axis != 1) throw Error(ErrorCode::kShapeMismatch, "softmax axis must be 0 or 1");
  const std::size_t r = t.rows(a), c = t.cols(a);
  Var out = t.push(Op::kSoftmax, r, c, {a}, 0, static_cast<double>(axis));
  const double* av = t.value(a).data();
  double* o = t.mutable_value(out);
  const std::size_t outer = axis == 0 ? c : r;
  const std::size_t inner = axis == 0 ? r : c;
  for (std::size_t u = 0; u < outer; ++u) {
    auto idx = [&](std::size_t v) { return axis == 0 ? v * c + u : u * c + v; };
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < inner; ++v) mx = std::max(mx, av[idx(v)]);
    double s = 0.0;
    for (std::size_t v = 0; v < inner; ++v) {
      o[idx(v)] = std::exp(av[idx(v)] - mx);
      s += o[idx(v)];
    }
    for (std::size_t v = 0; v < inner; ++v) o[idx(v)] /= s;
  }
  return out;
}

Var dot(Tape& t, Var a, Var b) {
  if (t.size(a) != t.size(b)) shape_error("dot", t, a, b);
  Var out = t.push(Op::kDot, 1, 1, {a, b});
  const double* av = t.value(a).data();
  const double* bv = t.value(b).data();
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(a); ++i) acc += av[i] * bv[i];
  t.mutable_value(out)[0] = acc;
  return out;
}

Var sum(Tape& t, Var a) {
  Var out = t.push(Op::kSum, 1, 1, {a});
  auto v = t.value(a);
  t.mutable_value(out)[0] = std::accumulate(v.begin(), v.end(), 0.0);
  return out;
}

Var l1_distance(Tape& t, Var a, Var b) {
  if (t.rows(a) != t.rows(b) || t.cols(a) != t.cols(b)) shape_error("l1_distance", t, a, b);
  Var out = t.push(Op::kL1Distance, 1, 1, {a, b});
  const double* av = t.value(a).data();
  const double* bv = t.value(b).data();
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(a); ++i) acc += std::abs(av[i] - bv[i]);
  t.mutable_value(out)[0] = acc;
  return out;
}

Var dropout(Tape& t, Var a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw Error(ErrorCode::kInvalidConfig, "dropout rate must be < 1");
  const std::size_t n = t.size(a);
  Var out = t.push(Op::kDropout, t.rows(a), t.cols(a), {a}, n, rate);
  double* mask = t.aux(out);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask[i] = u < rate ? 0.0 : keep_scale;
  }
  const double* av = t.value(a).data();
  double* o = t.mutable_value(out);
  for (std::size_t i = 0; i < n; ++i) o[i] = av[i] * mask[i];
  return out;
}

LstmOutput lstm_cell(Tape& t, Var x, Var h, Var c, Var weights, Var bias) {
  const std::size_t H = t.rows(h);
  const std::size_t in = t.rows(x);
  if (t.cols(x) != 1 || t.cols(h) != 1 || t.rows(c) != H || t.cols(c) != 1) {
    shape_error("lstm_cell(x,h)", t, x, h);
  }
  if (t.rows(weights) != 4 * H || t.cols(weights) != in + H) shape_error("lstm_cell(W)", t, weights, x);
  if (t.rows(bias) != 4 * H || t.cols(bias) != 1) shape_error("lstm_cell(b)", t, bias, h);

  const Var links[5] = {x, h, c, weights, bias};
  Var out = t.push_links(Op::kLstmCell, 2 * H, 1, links, 5 * H);
  const double* W = t.value(weights).data();
  const double* b = t.value(bias).data();
  const double* xv = t.value(x).data();
  const double* hv = t.value(h).data();
  const double* cv = t.value(c).data();
  double* a = t.aux(out);
  double* o = t.mutable_value(out);
  const std::size_t width = in + H;
  for (std::size_t r = 0; r < 4 * H; ++r) {
    const double* row = W + r * width;
    double z = b[r];
    for (std::size_t l = 0; l < in; ++l) z += row[l] * xv[l];
    for (std::size_t l = 0; l < H; ++l) z += row[in + l] * hv[l];
    a[r] = (r >= 2 * H && r < 3 * H) ? std::tanh(z) : sigmoid_scalar(z);
  }
  for (std::size_t j = 0; j < H; ++j) {
    const double cn = a[H + j] * cv[j] + a[j] * a[2 * H + j];
    const double tc = std::tanh(cn);
    a[4 * H + j] = tc;
    o[H + j] = cn;
    o[j] = a[3 * H + j] * tc;
  }
  return {slice(t, out, 0, H), slice(t, out, H, H)};
}

}  // namespace wimp::ad
