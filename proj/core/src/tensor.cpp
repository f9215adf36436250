#include "dancegen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "dancegen/errors.hpp"

namespace dancegen {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("shape has non-positive dimension " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::int64_t numel = 0;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;
};

static NodePtr make_leaf(Shape s, std::vector<double> values, bool rg) {
  auto n = std::make_shared<Node>();
  n->numel = shape_numel(s);
  if (static_cast<std::int64_t>(values.size()) != n->numel) {
    throw ShapeError("tensor data size " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(s));
  }
  n->shape = std::move(s);
  n->data = std::move(values);
  n->requires_grad = rg;
  n->is_leaf = true;
  return n;
}

// Result node of an operation.  Links to parents and installs the reverse
// closure only when some input carries gradient, so inference runs free of
// record-keeping.
static NodePtr make_op(Shape s, std::vector<double> values,
                       std::vector<NodePtr> parents,
                       std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->numel = shape_numel(s);
  n->shape = std::move(s);
  n->data = std::move(values);
  n->is_leaf = false;
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  if (rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

static std::vector<double>& grad_buf(Node* n) {
  if (n->grad.empty()) n->grad.assign(static_cast<std::size_t>(n->numel), 0.0);
  return n->grad;
}

}  // namespace detail

using detail::Node;
using detail::NodePtr;

// -------------------- Tensor handle --------------------

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  std::int64_t n = shape_numel(s);
  return Tensor(detail::make_leaf(std::move(s),
                                  std::vector<double>(static_cast<std::size_t>(n), 0.0),
                                  requires_grad));
}

Tensor Tensor::full(Shape s, double value, bool requires_grad) {
  std::int64_t n = shape_numel(s);
  return Tensor(detail::make_leaf(std::move(s),
                                  std::vector<double>(static_cast<std::size_t>(n), value),
                                  requires_grad));
}

Tensor Tensor::from_data(Shape s, std::vector<double> values, bool requires_grad) {
  return Tensor(detail::make_leaf(std::move(s), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}, false); }

static Node* checked(const Tensor& t, const char* where) {
  if (!t.defined()) throw ShapeError(std::string(where) + ": undefined tensor");
  return t.node();
}

const Shape& Tensor::shape() const { return checked(*this, "shape")->shape; }

int Tensor::dim(int i) const {
  const Shape& s = shape();
  if (i < 0 || i >= static_cast<int>(s.size()))
    throw ShapeError("dim: axis " + std::to_string(i) + " out of range for " + shape_str(s));
  return s[static_cast<std::size_t>(i)];
}

std::int64_t Tensor::numel() const { return checked(*this, "numel")->numel; }

bool Tensor::requires_grad() const { return checked(*this, "requires_grad")->requires_grad; }

const std::vector<double>& Tensor::data() const { return checked(*this, "data")->data; }

std::vector<double>& Tensor::mutable_data() {
  Node* n = checked(*this, "mutable_data");
  if (!n->is_leaf) throw ShapeError("mutable_data: only leaf tensors may be rewritten");
  return n->data;
}

const std::vector<double>& Tensor::grad() const {
  return detail::grad_buf(checked(*this, "grad"));
}

void Tensor::zero_grad() {
  Node* n = checked(*this, "zero_grad");
  n->grad.assign(static_cast<std::size_t>(n->numel), 0.0);
}

double Tensor::item() const {
  Node* n = checked(*this, "item");
  if (n->numel != 1)
    throw ShapeError("item: tensor has shape " + shape_str(n->shape) + ", expected one element");
  return n->data[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  Node* n = checked(*this, "at");
  if (idx.size() != n->shape.size())
    throw ShapeError("at: index rank does not match shape " + shape_str(n->shape));
  std::int64_t off = 0;
  std::size_t i = 0;
  for (int v : idx) {
    if (v < 0 || v >= n->shape[i])
      throw ShapeError("at: index out of range for shape " + shape_str(n->shape));
    off = off * n->shape[i] + v;
    ++i;
  }
  return n->data[static_cast<std::size_t>(off)];
}

Tensor Tensor::detach() const {
  Node* n = checked(*this, "detach");
  return from_data(n->shape, n->data, false);
}

// -------------------- broadcasting helpers --------------------

namespace {

std::vector<std::int64_t> row_major_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= s[static_cast<std::size_t>(i)];
  }
  return st;
}

struct BcastPlan {
  Shape out_shape;
  std::vector<std::int64_t> a_stride;  // zero along broadcast dimensions
  std::vector<std::int64_t> b_stride;
  bool same_shape = false;
};

BcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a == b) {
    BcastPlan p;
    p.out_shape = a;
    p.same_shape = true;
    return p;
  }
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": rank mismatch between " + shape_str(a) +
                     " and " + shape_str(b));
  }
  BcastPlan p;
  p.out_shape.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || a[i] == 1 || b[i] == 1) {
      p.out_shape[i] = std::max(a[i], b[i]);
    } else {
      throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                       " and " + shape_str(b));
    }
  }
  auto sa = row_major_strides(a);
  auto sb = row_major_strides(b);
  p.a_stride.resize(a.size());
  p.b_stride.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    p.a_stride[i] = (a[i] == 1 && p.out_shape[i] > 1) ? 0 : sa[i];
    p.b_stride[i] = (b[i] == 1 && p.out_shape[i] > 1) ? 0 : sb[i];
  }
  return p;
}

enum class BinKind { Add, Sub, Mul };

}  // namespace

static Tensor binary_op(const Tensor& ta, const Tensor& tb, BinKind kind, const char* name) {
  Node* na = checked(ta, name);
  Node* nb = checked(tb, name);
  BcastPlan plan = plan_broadcast(na->shape, nb->shape, name);
  std::int64_t n_out = shape_numel(plan.out_shape);
  std::vector<double> out(static_cast<std::size_t>(n_out));
  const double* ad = na->data.data();
  const double* bd = nb->data.data();

  // Shared index walk for the broadcast case: flat output index decoded into
  // per-operand offsets through the zeroed stride tables.
  std::vector<std::int64_t> a_off, b_off;
  if (!plan.same_shape) {
    a_off.resize(static_cast<std::size_t>(n_out));
    b_off.resize(static_cast<std::size_t>(n_out));
    std::size_t rank = plan.out_shape.size();
    std::vector<int> idx(rank, 0);
    for (std::int64_t f = 0; f < n_out; ++f) {
      std::int64_t oa = 0, ob = 0;
      for (std::size_t i = 0; i < rank; ++i) {
        oa += idx[i] * plan.a_stride[i];
        ob += idx[i] * plan.b_stride[i];
      }
      a_off[static_cast<std::size_t>(f)] = oa;
      b_off[static_cast<std::size_t>(f)] = ob;
      for (int i = static_cast<int>(rank) - 1; i >= 0; --i) {
        if (++idx[static_cast<std::size_t>(i)] < plan.out_shape[static_cast<std::size_t>(i)]) break;
        idx[static_cast<std::size_t>(i)] = 0;
      }
    }
  }

  if (plan.same_shape) {
    switch (kind) {
      case BinKind::Add:
        for (std::int64_t i = 0; i < n_out; ++i) out[i] = ad[i] + bd[i];
        break;
      case BinKind::Sub:
        for (std::int64_t i = 0; i < n_out; ++i) out[i] = ad[i] - bd[i];
        break;
      case BinKind::Mul:
        for (std::int64_t i = 0; i < n_out; ++i) out[i] = ad[i] * bd[i];
        break;
    }
  } else {
    for (std::int64_t i = 0; i < n_out; ++i) {
      double av = ad[a_off[static_cast<std::size_t>(i)]];
      double bv = bd[b_off[static_cast<std::size_t>(i)]];
      switch (kind) {
        case BinKind::Add: out[i] = av + bv; break;
        case BinKind::Sub: out[i] = av - bv; break;
        case BinKind::Mul: out[i] = av * bv; break;
      }
    }
  }

  auto pa = ta.node_ptr();
  auto pb = tb.node_ptr();
  bool same = plan.same_shape;
  auto backprop = [pa, pb, kind, same, a_off = std::move(a_off),
                   b_off = std::move(b_off)](Node& self) {
    const double* go = self.grad.data();
    const std::int64_t n = self.numel;
    Node* a = pa.get();
    Node* b = pb.get();
    const bool need_a = a->requires_grad;
    const bool need_b = b->requires_grad;
    double* ga = need_a ? detail::grad_buf(a).data() : nullptr;
    double* gb = need_b ? detail::grad_buf(b).data() : nullptr;
    for (std::int64_t i = 0; i < n; ++i) {
      double g = go[i];
      if (g == 0.0) continue;
      std::int64_t ia = same ? i : a_off[static_cast<std::size_t>(i)];
      std::int64_t ib = same ? i : b_off[static_cast<std::size_t>(i)];
      switch (kind) {
        case BinKind::Add:
          if (need_a) ga[ia] += g;
          if (need_b) gb[ib] += g;
          break;
        case BinKind::Sub:
          if (need_a) ga[ia] += g;
          if (need_b) gb[ib] -= g;
          break;
        case BinKind::Mul:
          if (need_a) ga[ia] += g * b->data[static_cast<std::size_t>(ib)];
          if (need_b) gb[ib] += g * a->data[static_cast<std::size_t>(ia)];
          break;
      }
    }
  };
  return Tensor(detail::make_op(plan.out_shape, std::move(out),
                                {ta.node_ptr(), tb.node_ptr()}, std::move(backprop)));
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul, "mul"); }

// -------------------- scalar and unary operations --------------------

// f computes the output value; df computes d(out)/d(in) from input and
// output values.  Plain function pointers keep the closures small.
static Tensor unary_op(const Tensor& ta, const char* name,
                       double (*f)(double), double (*df)(double x, double y)) {
  Node* na = checked(ta, name);
  std::vector<double> out(na->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(na->data[i]);
  auto pa = ta.node_ptr();
  auto backprop = [pa, df](Node& self) {
    Node* a = pa.get();
    if (!a->requires_grad) return;
    double* ga = detail::grad_buf(a).data();
    const double* go = self.grad.data();
    for (std::int64_t i = 0; i < self.numel; ++i) {
      ga[i] += go[i] * df(a->data[static_cast<std::size_t>(i)],
                          self.data[static_cast<std::size_t>(i)]);
    }
  };
  return Tensor(detail::make_op(na->shape, std::move(out), {ta.node_ptr()},
                                std::move(backprop)));
}

Tensor add(const Tensor& a, double b) {
  Node* na = checked(a, "add");
  std::vector<double> out(na->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = na->data[i] + b;
  auto pa = a.node_ptr();
  return Tensor(detail::make_op(na->shape, std::move(out), {pa}, [pa](Node& self) {
    Node* p = pa.get();
    if (!p->requires_grad) return;
    double* ga = detail::grad_buf(p).data();
    for (std::int64_t i = 0; i < self.numel; ++i) ga[i] += self.grad[static_cast<std::size_t>(i)];
  }));
}

Tensor sub(const Tensor& a, double b) { return add(a, -b); }

Tensor mul(const Tensor& a, double b) {
  Node* na = checked(a, "mul");
  std::vector<double> out(na->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = na->data[i] * b;
  auto pa = a.node_ptr();
  return Tensor(detail::make_op(na->shape, std::move(out), {pa}, [pa, b](Node& self) {
    Node* p = pa.get();
    if (!p->requires_grad) return;
    double* ga = detail::grad_buf(p).data();
    for (std::int64_t i = 0; i < self.numel; ++i)
      ga[i] += self.grad[static_cast<std::size_t>(i)] * b;
  }));
}

Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_op(a, "relu",
                  [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& ta, double slope) {
  Node* na = checked(ta, "leaky_relu");
  std::vector<double> out(na->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = na->data[i];
    out[i] = x > 0.0 ? x : slope * x;
  }
  auto pa = ta.node_ptr();
  return Tensor(detail::make_op(na->shape, std::move(out), {pa}, [pa, slope](Node& self) {
    Node* p = pa.get();
    if (!p->requires_grad) return;
    double* ga = detail::grad_buf(p).data();
    for (std::int64_t i = 0; i < self.numel; ++i) {
      double x = p->data[static_cast<std::size_t>(i)];
      ga[i] += self.grad[static_cast<std::size_t>(i)] * (x > 0.0 ? 1.0 : slope);
    }
  }));
}

Tensor tanh(const Tensor& a) {
  return unary_op(a, "tanh",
                  [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, "sigmoid",
                  [](double x) {
                    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                    double e = std::exp(x);
                    return e / (1.0 + e);
                  },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& a) {
  return unary_op(a, "abs",
                  [](double x) { return std::abs(x); },
                  [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& a) {
  return unary_op(a, "exp",
                  [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  Node* na = checked(a, "log");
  for (double x : na->data) {
    if (x <= 0.0) throw NumericError("log: non-positive input " + std::to_string(x));
  }
  return unary_op(a, "log",
                  [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor clamp(const Tensor& ta, double lo, double hi) {
  if (lo > hi) throw ShapeError("clamp: lo > hi");
  Node* na = checked(ta, "clamp");
  std::vector<double> out(na->data.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::min(std::max(na->data[i], lo), hi);
  auto pa = ta.node_ptr();
  return Tensor(detail::make_op(na->shape, std::move(out), {pa}, [pa, lo, hi](Node& self) {
    Node* p = pa.get();
    if (!p->requires_grad) return;
    double* ga = detail::grad_buf(p).data();
    for (std::int64_t i = 0; i < self.numel; ++i) {
      double x = p->data[static_cast<std::size_t>(i)];
      if (x > lo && x < hi) ga[i] += self.grad[static_cast<std::size_t>(i)];
    }
  }));
}

// -------------------- reductions and structure --------------------

Tensor sum(const Tensor& a) {
  Node* na = checked(a, "sum");
  double s = 0.0;
  for (double x : na->data) s += x;
  auto pa = a.node_ptr();
  return Tensor(detail::make_op({1}, {s}, {pa}, [pa](Node& self) {
    Node* p = pa.get();
    if (!p->requires_grad) return;
    double* ga = detail::grad_buf(p).data();
    double g = self.grad[0];
    for (std::int64_t i = 0; i < p->numel; ++i) ga[i] += g;
  }));
}

Tensor mean(const Tensor& a) {
  Node* na = checked(a, "mean");
  return mul(sum(a), 1.0 / static_cast<double>(na->numel));
}

Tensor sum_axis0(const Tensor& a) {
  Node* na = checked(a, "sum_axis0");
  if (na->shape.size() < 2) throw ShapeError("sum_axis0: rank must be at least 2");
  Shape out_shape(na->shape.begin() + 1, na->shape.end());
  std::int64_t rest = shape_numel(out_shape);
  int d0 = na->shape[0];
  std::vector<double> out(static_cast<std::size_t>(rest), 0.0);
  for (int d = 0; d < d0; ++d) {
    const double* row = na->data.data() + static_cast<std::int64_t>(d) * rest;
    for (std::int64_t r = 0; r < rest; ++r) out[static_cast<std::size_t>(r)] += row[r];
  }
  auto pa = a.node_ptr();
  return Tensor(detail::make_op(out_shape, std::move(out), {pa}, [pa, d0, rest](Node& self) {
    Node* p = pa.get();
    if (!p->requires_grad) return;
    double* ga = detail::grad_buf(p).data();
    const double* go = self.grad.data();
    for (int d = 0; d < d0; ++d) {
      double* row = ga + static_cast<std::int64_t>(d) * rest;
      for (std::int64_t r = 0; r < rest; ++r) row[r] += go[r];
    }
  }));
}

Tensor select(const Tensor& a, std::int64_t flat_index) {
  Node* na = checked(a, "select");
  if (flat_index < 0 || flat_index >= na->numel)
    throw ShapeError("select: index " + std::to_string(flat_index) +
                     " out of range for shape " + shape_str(na->shape));
  auto pa = a.node_ptr();
  return Tensor(detail::make_op({1}, {na->data[static_cast<std::size_t>(flat_index)]}, {pa},
                                [pa, flat_index](Node& self) {
                                  Node* p = pa.get();
                                  if (!p->requires_grad) return;
                                  detail::grad_buf(p)[static_cast<std::size_t>(flat_index)] +=
                                      self.grad[0];
                                }));
}

Tensor reshape(const Tensor& a, Shape s) {
  Node* na = checked(a, "reshape");
  if (shape_numel(s) != na->numel)
    throw ShapeError("reshape: cannot view " + shape_str(na->shape) + " as " + shape_str(s));
  auto pa = a.node_ptr();
  return Tensor(detail::make_op(std::move(s), na->data, {pa}, [pa](Node& self) {
    Node* p = pa.get();
    if (!p->requires_grad) return;
    double* ga = detail::grad_buf(p).data();
    for (std::int64_t i = 0; i < self.numel; ++i)
      ga[i] += self.grad[static_cast<std::size_t>(i)];
  }));
}

Tensor concat_axis0(const Tensor& a, const Tensor& b) {
  Node* na = checked(a, "concat_axis0");
  Node* nb = checked(b, "concat_axis0");
  if (na->shape.size() != nb->shape.size() || na->shape.empty())
    throw ShapeError("concat_axis0: rank mismatch between " + shape_str(na->shape) +
                     " and " + shape_str(nb->shape));
  for (std::size_t i = 1; i < na->shape.size(); ++i) {
    if (na->shape[i] != nb->shape[i])
      throw ShapeError("concat_axis0: trailing dimensions differ, " + shape_str(na->shape) +
                       " vs " + shape_str(nb->shape));
  }
  Shape out_shape = na->shape;
  out_shape[0] += nb->shape[0];
  std::vector<double> out;
  out.reserve(na->data.size() + nb->data.size());
  out.insert(out.end(), na->data.begin(), na->data.end());
  out.insert(out.end(), nb->data.begin(), nb->data.end());
  auto pa = a.node_ptr();
  auto pb = b.node_ptr();
  std::int64_t na_count = na->numel;
  return Tensor(detail::make_op(std::move(out_shape), std::move(out), {pa, pb},
                                [pa, pb, na_count](Node& self) {
    Node* x = pa.get();
    Node* y = pb.get();
    const double* go = self.grad.data();
    if (x->requires_grad) {
      double* ga = detail::grad_buf(x).data();
      for (std::int64_t i = 0; i < na_count; ++i) ga[i] += go[i];
    }
    if (y->requires_grad) {
      double* gb = detail::grad_buf(y).data();
      for (std::int64_t i = na_count; i < self.numel; ++i) gb[i - na_count] += go[i];
    }
  }));
}

// -------------------- tensordot --------------------

namespace {

// Offsets into a flat buffer produced by walking the given axes of a shape
// in row-major order; separable, so free-axis and contracted-axis offsets
// add to give a full element offset.
std::vector<std::int64_t> axis_offsets(const Shape& shape,
                                       const std::vector<std::int64_t>& strides,
                                       const std::vector<int>& axes) {
  std::int64_t count = 1;
  for (int ax : axes) count *= shape[static_cast<std::size_t>(ax)];
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(count));
  if (axes.empty()) {
    out.push_back(0);
    return out;
  }
  std::vector<int> idx(axes.size(), 0);
  while (true) {
    std::int64_t off = 0;
    for (std::size_t i = 0; i < axes.size(); ++i)
      off += static_cast<std::int64_t>(idx[i]) * strides[static_cast<std::size_t>(axes[i])];
    out.push_back(off);
    int i = static_cast<int>(axes.size()) - 1;
    for (; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < shape[static_cast<std::size_t>(axes[i])]) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
    if (i < 0) break;
  }
  return out;
}

}  // namespace

Tensor tensordot(const Tensor& ta, const Tensor& tb,
                 const std::vector<std::pair<int, int>>& axes) {
  Node* na = checked(ta, "tensordot");
  Node* nb = checked(tb, "tensordot");
  if (axes.empty()) throw ShapeError("tensordot: no contracted axes given");
  const int ra = static_cast<int>(na->shape.size());
  const int rb = static_cast<int>(nb->shape.size());
  std::vector<bool> used_a(static_cast<std::size_t>(ra), false);
  std::vector<bool> used_b(static_cast<std::size_t>(rb), false);
  std::vector<int> con_a, con_b;
  for (auto [ax, bx] : axes) {
    if (ax < 0 || ax >= ra || bx < 0 || bx >= rb)
      throw ShapeError("tensordot: contracted axis out of range for " +
                       shape_str(na->shape) + " x " + shape_str(nb->shape));
    if (used_a[static_cast<std::size_t>(ax)] || used_b[static_cast<std::size_t>(bx)])
      throw ShapeError("tensordot: axis contracted twice");
    if (na->shape[static_cast<std::size_t>(ax)] != nb->shape[static_cast<std::size_t>(bx)])
      throw ShapeError("tensordot: contracted extents differ, axis " + std::to_string(ax) +
                       " of " + shape_str(na->shape) + " vs axis " + std::to_string(bx) +
                       " of " + shape_str(nb->shape));
    used_a[static_cast<std::size_t>(ax)] = true;
    used_b[static_cast<std::size_t>(bx)] = true;
    con_a.push_back(ax);
    con_b.push_back(bx);
  }
  std::vector<int> free_a, free_b;
  for (int i = 0; i < ra; ++i)
    if (!used_a[static_cast<std::size_t>(i)]) free_a.push_back(i);
  for (int i = 0; i < rb; ++i)
    if (!used_b[static_cast<std::size_t>(i)]) free_b.push_back(i);

  Shape out_shape;
  for (int ax : free_a) out_shape.push_back(na->shape[static_cast<std::size_t>(ax)]);
  for (int bx : free_b) out_shape.push_back(nb->shape[static_cast<std::size_t>(bx)]);
  if (out_shape.empty()) out_shape = {1};

  auto sa = row_major_strides(na->shape);
  auto sb = row_major_strides(nb->shape);
  auto afo = axis_offsets(na->shape, sa, free_a);
  auto aco = axis_offsets(na->shape, sa, con_a);
  auto bfo = axis_offsets(nb->shape, sb, free_b);
  auto bco = axis_offsets(nb->shape, sb, con_b);

  const std::int64_t m = static_cast<std::int64_t>(afo.size());
  const std::int64_t n = static_cast<std::int64_t>(bfo.size());
  const std::int64_t k = static_cast<std::int64_t>(aco.size());
  std::vector<double> out(static_cast<std::size_t>(m * n));
  const double* ad = na->data.data();
  const double* bd = nb->data.data();
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int64_t ao = afo[static_cast<std::size_t>(i)];
    double* orow = out.data() + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const std::int64_t bo = bfo[static_cast<std::size_t>(j)];
      double s = 0.0;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        s += ad[ao + aco[static_cast<std::size_t>(kk)]] * bd[bo + bco[static_cast<std::size_t>(kk)]];
      }
      orow[j] = s;
    }
  }

  auto pa = ta.node_ptr();
  auto pb = tb.node_ptr();
  auto backprop = [pa, pb, afo = std::move(afo), aco = std::move(aco),
                   bfo = std::move(bfo), bco = std::move(bco), m, n, k](Node& self) {
    Node* a = pa.get();
    Node* b = pb.get();
    const double* go = self.grad.data();
    const double* ad = a->data.data();
    const double* bd = b->data.data();
    if (a->requires_grad) {
      double* ga = detail::grad_buf(a).data();
      for (std::int64_t i = 0; i < m; ++i) {
        const std::int64_t ao = afo[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < n; ++j) {
          double g = go[i * n + j];
          if (g == 0.0) continue;
          const std::int64_t bo = bfo[static_cast<std::size_t>(j)];
          for (std::int64_t kk = 0; kk < k; ++kk) {
            ga[ao + aco[static_cast<std::size_t>(kk)]] +=
                g * bd[bo + bco[static_cast<std::size_t>(kk)]];
          }
        }
      }
    }
    if (b->requires_grad) {
      double* gb = detail::grad_buf(b).data();
      for (std::int64_t i = 0; i < m; ++i) {
        const std::int64_t ao = afo[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < n; ++j) {
          double g = go[i * n + j];
          if (g == 0.0) continue;
          const std::int64_t bo = bfo[static_cast<std::size_t>(j)];
          for (std::int64_t kk = 0; kk < k; ++kk) {
            gb[bo + bco[static_cast<std::size_t>(kk)]] +=
                g * ad[ao + aco[static_cast<std::size_t>(kk)]];
          }
        }
      }
    }
  };
  return Tensor(detail::make_op(std::move(out_shape), std::move(out),
                                {ta.node_ptr(), tb.node_ptr()}, std::move(backprop)));
}

// -------------------- convolutions --------------------

static void check_feature_map(Node* x, const char* op) {
  if (x->shape.size() != 3)
    throw ShapeError(std::string(op) + ": input must be (C,T,V), got " + shape_str(x->shape));
}

Tensor conv2d(const Tensor& tx, const Tensor& tw, const Tensor& tbias,
              int stride_t, int pad_t) {
  Node* nx = checked(tx, "conv2d");
  Node* nw = checked(tw, "conv2d");
  check_feature_map(nx, "conv2d");
  if (nw->shape.size() != 3)
    throw ShapeError("conv2d: weight must be (C_out,C_in,k_t), got " + shape_str(nw->shape));
  if (stride_t < 1) throw ShapeError("conv2d: stride must be positive");
  if (pad_t < 0) throw ShapeError("conv2d: padding must be non-negative");
  const int c_in = nx->shape[0], t_in = nx->shape[1], v = nx->shape[2];
  const int c_out = nw->shape[0], kt = nw->shape[2];
  if (nw->shape[1] != c_in)
    throw ShapeError("conv2d: weight expects " + std::to_string(nw->shape[1]) +
                     " input channels, input has " + std::to_string(c_in));
  if (kt > t_in + 2 * pad_t)
    throw ShapeError("conv2d: kernel k_t=" + std::to_string(kt) +
                     " longer than padded input T+2*pad=" + std::to_string(t_in + 2 * pad_t));
  Node* nb = nullptr;
  if (tbias.defined()) {
    nb = tbias.node();
    if (nb->shape != Shape{c_out})
      throw ShapeError("conv2d: bias must be (C_out), got " + shape_str(nb->shape));
  }
  const int t_out = (t_in + 2 * pad_t - kt) / stride_t + 1;

  std::vector<double> out(static_cast<std::size_t>(c_out) * t_out * v, 0.0);
  const double* xd = nx->data.data();
  const double* wd = nw->data.data();
  for (int o = 0; o < c_out; ++o) {
    const double bias_v = nb ? nb->data[static_cast<std::size_t>(o)] : 0.0;
    for (int to = 0; to < t_out; ++to) {
      double* orow = out.data() + (static_cast<std::int64_t>(o) * t_out + to) * v;
      for (int j = 0; j < v; ++j) orow[j] = bias_v;
      for (int c = 0; c < c_in; ++c) {
        for (int dt = 0; dt < kt; ++dt) {
          const int ti = to * stride_t + dt - pad_t;
          if (ti < 0 || ti >= t_in) continue;
          const double wv = wd[(static_cast<std::int64_t>(o) * c_in + c) * kt + dt];
          if (wv == 0.0) continue;
          const double* xrow = xd + (static_cast<std::int64_t>(c) * t_in + ti) * v;
          for (int j = 0; j < v; ++j) orow[j] += wv * xrow[j];
        }
      }
    }
  }

  auto px = tx.node_ptr();
  auto pw = tw.node_ptr();
  auto pb = tbias.defined() ? tbias.node_ptr() : detail::NodePtr();
  std::vector<detail::NodePtr> parents{px, pw};
  if (pb) parents.push_back(pb);
  auto backprop = [px, pw, pb, c_in, t_in, v, c_out, kt, t_out, stride_t, pad_t](Node& self) {
    Node* x = px.get();
    Node* w = pw.get();
    Node* b = pb ? pb.get() : nullptr;
    const double* go = self.grad.data();
    const double* xd = x->data.data();
    const double* wd = w->data.data();
    double* gx = x->requires_grad ? detail::grad_buf(x).data() : nullptr;
    double* gw = w->requires_grad ? detail::grad_buf(w).data() : nullptr;
    double* gb = (b && b->requires_grad) ? detail::grad_buf(b).data() : nullptr;
    for (int o = 0; o < c_out; ++o) {
      for (int to = 0; to < t_out; ++to) {
        const double* gorow = go + (static_cast<std::int64_t>(o) * t_out + to) * v;
        if (gb) {
          double s = 0.0;
          for (int j = 0; j < v; ++j) s += gorow[j];
          gb[o] += s;
        }
        for (int c = 0; c < c_in; ++c) {
          for (int dt = 0; dt < kt; ++dt) {
            const int ti = to * stride_t + dt - pad_t;
            if (ti < 0 || ti >= t_in) continue;
            const std::int64_t xoff = (static_cast<std::int64_t>(c) * t_in + ti) * v;
            const std::int64_t woff = (static_cast<std::int64_t>(o) * c_in + c) * kt + dt;
            if (gx) {
              const double wv = wd[woff];
              double* gxrow = gx + xoff;
              for (int j = 0; j < v; ++j) gxrow[j] += wv * gorow[j];
            }
            if (gw) {
              const double* xrow = xd + xoff;
              double s = 0.0;
              for (int j = 0; j < v; ++j) s += xrow[j] * gorow[j];
              gw[woff] += s;
            }
          }
        }
      }
    }
  };
  return Tensor(detail::make_op({c_out, t_out, v}, std::move(out), std::move(parents),
                                std::move(backprop)));
}

Tensor transposed_conv2d(const Tensor& tx, const Tensor& tw, const Tensor& tbias,
                         int stride_t, int pad_t) {
  Node* nx = checked(tx, "transposed_conv2d");
  Node* nw = checked(tw, "transposed_conv2d");
  check_feature_map(nx, "transposed_conv2d");
  if (nw->shape.size() != 3)
    throw ShapeError("transposed_conv2d: weight must be (C_in,C_out,k_t), got " +
                     shape_str(nw->shape));
  if (stride_t < 1) throw ShapeError("transposed_conv2d: stride must be positive");
  if (pad_t < 0) throw ShapeError("transposed_conv2d: padding must be non-negative");
  const int c_in = nx->shape[0], t_in = nx->shape[1], v = nx->shape[2];
  const int c_out = nw->shape[1], kt = nw->shape[2];
  if (nw->shape[0] != c_in)
    throw ShapeError("transposed_conv2d: weight expects " + std::to_string(nw->shape[0]) +
                     " input channels, input has " + std::to_string(c_in));
  const int t_out = (t_in - 1) * stride_t - 2 * pad_t + kt;
  if (t_out < 1)
    throw ShapeError("transposed_conv2d: output length " + std::to_string(t_out) +
                     " is not positive");
  Node* nb = nullptr;
  if (tbias.defined()) {
    nb = tbias.node();
    if (nb->shape != Shape{c_out})
      throw ShapeError("transposed_conv2d: bias must be (C_out), got " + shape_str(nb->shape));
  }

  std::vector<double> out(static_cast<std::size_t>(c_out) * t_out * v, 0.0);
  const double* xd = nx->data.data();
  const double* wd = nw->data.data();
  if (nb) {
    for (int o = 0; o < c_out; ++o) {
      const double bias_v = nb->data[static_cast<std::size_t>(o)];
      double* obase = out.data() + static_cast<std::int64_t>(o) * t_out * v;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(t_out) * v; ++i) obase[i] = bias_v;
    }
  }
  for (int c = 0; c < c_in; ++c) {
    for (int t = 0; t < t_in; ++t) {
      const double* xrow = xd + (static_cast<std::int64_t>(c) * t_in + t) * v;
      for (int dt = 0; dt < kt; ++dt) {
        const int to = t * stride_t + dt - pad_t;
        if (to < 0 || to >= t_out) continue;
        for (int o = 0; o < c_out; ++o) {
          const double wv = wd[(static_cast<std::int64_t>(c) * c_out + o) * kt + dt];
          if (wv == 0.0) continue;
          double* orow = out.data() + (static_cast<std::int64_t>(o) * t_out + to) * v;
          for (int j = 0; j < v; ++j) orow[j] += wv * xrow[j];
        }
      }
    }
  }

  auto px = tx.node_ptr();
  auto pw = tw.node_ptr();
  auto pb = tbias.defined() ? tbias.node_ptr() : detail::NodePtr();
  std::vector<detail::NodePtr> parents{px, pw};
  if (pb) parents.push_back(pb);
  auto backprop = [px, pw, pb, c_in, t_in, v, c_out, kt, t_out, stride_t, pad_t](Node& self) {
    Node* x = px.get();
    Node* w = pw.get();
    Node* b = pb ? pb.get() : nullptr;
    const double* go = self.grad.data();
    const double* xd = x->data.data();
    const double* wd = w->data.data();
    double* gx = x->requires_grad ? detail::grad_buf(x).data() : nullptr;
    double* gw = w->requires_grad ? detail::grad_buf(w).data() : nullptr;
    double* gb = (b && b->requires_grad) ? detail::grad_buf(b).data() : nullptr;
    if (gb) {
      for (int o = 0; o < c_out; ++o) {
        const double* obase = go + static_cast<std::int64_t>(o) * t_out * v;
        double s = 0.0;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(t_out) * v; ++i) s += obase[i];
        gb[o] += s;
      }
    }
    for (int c = 0; c < c_in; ++c) {
      for (int t = 0; t < t_in; ++t) {
        const std::int64_t xoff = (static_cast<std::int64_t>(c) * t_in + t) * v;
        for (int dt = 0; dt < kt; ++dt) {
          const int to = t * stride_t + dt - pad_t;
          if (to < 0 || to >= t_out) continue;
          for (int o = 0; o < c_out; ++o) {
            const std::int64_t woff = (static_cast<std::int64_t>(c) * c_out + o) * kt + dt;
            const double* gorow = go + (static_cast<std::int64_t>(o) * t_out + to) * v;
            if (gx) {
              const double wv = wd[woff];
              double* gxrow = gx + xoff;
              for (int j = 0; j < v; ++j) gxrow[j] += wv * gorow[j];
            }
            if (gw) {
              const double* xrow = xd + xoff;
              double s = 0.0;
              for (int j = 0; j < v; ++j) s += xrow[j] * gorow[j];
              gw[woff] += s;
            }
          }
        }
      }
    }
  };
  return Tensor(detail::make_op({c_out, t_out, v}, std::move(out), std::move(parents),
                                std::move(backprop)));
}

// -------------------- batch normalization --------------------

Tensor batch_norm(const Tensor& tx, const Tensor& tgamma, const Tensor& tbeta,
                  BatchNormState& state, bool training, double momentum, double eps) {
  Node* nx = checked(tx, "batch_norm");
  Node* ng = checked(tgamma, "batch_norm");
  Node* nb = checked(tbeta, "batch_norm");
  check_feature_map(nx, "batch_norm");
  const int c = nx->shape[0], t = nx->shape[1], v = nx->shape[2];
  if (ng->shape != Shape{c} || nb->shape != Shape{c})
    throw ShapeError("batch_norm: gamma/beta must be (C)=(" + std::to_string(c) + "), got " +
                     shape_str(ng->shape) + " and " + shape_str(nb->shape));
  if (state.running_mean.empty()) state.init(c);
  if (static_cast<int>(state.running_mean.size()) != c)
    throw ShapeError("batch_norm: running statistics sized for " +
                     std::to_string(state.running_mean.size()) + " channels, input has " +
                     std::to_string(c));

  const std::int64_t n = static_cast<std::int64_t>(t) * v;
  if (training && n < 2)
    throw NumericError("batch_norm: training mode needs at least two values per channel, got " +
                       std::to_string(n));
  const double* xd = nx->data.data();
  std::vector<double> mu(static_cast<std::size_t>(c), 0.0);
  std::vector<double> inv(static_cast<std::size_t>(c), 0.0);

  if (training) {
    for (int ci = 0; ci < c; ++ci) {
      const double* xrow = xd + static_cast<std::int64_t>(ci) * n;
      double m = 0.0;
      for (std::int64_t i = 0; i < n; ++i) m += xrow[i];
      m /= static_cast<double>(n);
      double var = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        double d = xrow[i] - m;
        var += d * d;
      }
      var /= static_cast<double>(n);
      mu[static_cast<std::size_t>(ci)] = m;
      inv[static_cast<std::size_t>(ci)] = 1.0 / std::sqrt(var + eps);
      state.running_mean[static_cast<std::size_t>(ci)] =
          momentum * state.running_mean[static_cast<std::size_t>(ci)] + (1.0 - momentum) * m;
      state.running_var[static_cast<std::size_t>(ci)] =
          momentum * state.running_var[static_cast<std::size_t>(ci)] + (1.0 - momentum) * var;
    }
  } else {
    for (int ci = 0; ci < c; ++ci) {
      mu[static_cast<std::size_t>(ci)] = state.running_mean[static_cast<std::size_t>(ci)];
      inv[static_cast<std::size_t>(ci)] =
          1.0 / std::sqrt(state.running_var[static_cast<std::size_t>(ci)] + eps);
    }
  }

  std::vector<double> out(nx->data.size());
  const double* gd = ng->data.data();
  const double* bd = nb->data.data();
  for (int ci = 0; ci < c; ++ci) {
    const double m = mu[static_cast<std::size_t>(ci)];
    const double iv = inv[static_cast<std::size_t>(ci)];
    const double ga = gd[ci], be = bd[ci];
    const double* xrow = xd + static_cast<std::int64_t>(ci) * n;
    double* orow = out.data() + static_cast<std::int64_t>(ci) * n;
    for (std::int64_t i = 0; i < n; ++i) orow[i] = ga * (xrow[i] - m) * iv + be;
  }

  auto px = tx.node_ptr();
  auto pg = tgamma.node_ptr();
  auto pbeta = tbeta.node_ptr();
  auto backprop = [px, pg, pbeta, mu = std::move(mu), inv = std::move(inv), c, n,
                   training](Node& self) {
    Node* x = px.get();
    Node* g = pg.get();
    Node* b = pbeta.get();
    const double* go = self.grad.data();
    const double* xd = x->data.data();
    const double* gd = g->data.data();
    double* gx = x->requires_grad ? detail::grad_buf(x).data() : nullptr;
    double* gg = g->requires_grad ? detail::grad_buf(g).data() : nullptr;
    double* gb = b->requires_grad ? detail::grad_buf(b).data() : nullptr;
    const double dn = static_cast<double>(n);
    for (int ci = 0; ci < c; ++ci) {
      const double m = mu[static_cast<std::size_t>(ci)];
      const double iv = inv[static_cast<std::size_t>(ci)];
      const double gam = gd[ci];
      const double* xrow = xd + static_cast<std::int64_t>(ci) * n;
      const double* gorow = go + static_cast<std::int64_t>(ci) * n;
      if (gb) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += gorow[i];
        gb[ci] += s;
      }
      if (gg) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += gorow[i] * (xrow[i] - m) * iv;
        gg[ci] += s;
      }
      if (!gx) continue;
      double* gxrow = gx + static_cast<std::int64_t>(ci) * n;
      if (!training) {
        // Running statistics are constants here.
        for (std::int64_t i = 0; i < n; ++i) gxrow[i] += gorow[i] * gam * iv;
        continue;
      }
      double sum_dxhat = 0.0, sum_dxhat_xc = 0.0, sum_xc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double dxhat = gorow[i] * gam;
        const double xc = xrow[i] - m;
        sum_dxhat += dxhat;
        sum_dxhat_xc += dxhat * xc;
        sum_xc += xc;
      }
      const double dvar = sum_dxhat_xc * (-0.5) * iv * iv * iv;
      const double dmu = -iv * sum_dxhat + dvar * (-2.0 / dn) * sum_xc;
      for (std::int64_t i = 0; i < n; ++i) {
        const double dxhat = gorow[i] * gam;
        const double xc = xrow[i] - m;
        gxrow[i] += dxhat * iv + dvar * 2.0 * xc / dn + dmu / dn;
      }
    }
  };
  return Tensor(detail::make_op(nx->shape, std::move(out),
                                {tx.node_ptr(), tgamma.node_ptr(), tbeta.node_ptr()},
                                std::move(backprop)));
}

// -------------------- dropout --------------------

Tensor dropout(const Tensor& tx, double p, bool training, Rng& rng) {
  Node* nx = checked(tx, "dropout");
  if (p < 0.0 || p >= 1.0)
    throw ShapeError("dropout: probability " + std::to_string(p) + " outside [0,1)");
  if (!training || p == 0.0) return tx;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(nx->data.size());
  std::vector<double> out(nx->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double m = (rng.uniform01() >= p) ? keep_scale : 0.0;
    (*mask)[i] = m;
    out[i] = nx->data[i] * m;
  }
  auto pa = tx.node_ptr();
  return Tensor(detail::make_op(nx->shape, std::move(out), {pa}, [pa, mask](Node& self) {
    Node* x = pa.get();
    if (!x->requires_grad) return;
    double* gx = detail::grad_buf(x).data();
    const double* go = self.grad.data();
    for (std::int64_t i = 0; i < self.numel; ++i)
      gx[i] += go[i] * (*mask)[static_cast<std::size_t>(i)];
  }));
}

// -------------------- embedding lookup --------------------

Tensor embed_rows(const Tensor& ttable, const std::vector<int>& rows) {
  Node* nt = checked(ttable, "embed_rows");
  if (nt->shape.size() != 2)
    throw ShapeError("embed_rows: table must be (S,C), got " + shape_str(nt->shape));
  if (rows.empty()) throw ShapeError("embed_rows: no rows requested");
  const int s = nt->shape[0], c = nt->shape[1];
  for (int r : rows) {
    if (r < 0 || r >= s)
      throw ShapeError("embed_rows: row " + std::to_string(r) + " out of range for table with " +
                       std::to_string(s) + " rows");
  }
  const int t = static_cast<int>(rows.size());
  std::vector<double> out(static_cast<std::size_t>(c) * t);
  const double* td = nt->data.data();
  for (int ci = 0; ci < c; ++ci) {
    for (int ti = 0; ti < t; ++ti) {
      out[static_cast<std::size_t>(ci) * t + ti] =
          td[static_cast<std::int64_t>(rows[static_cast<std::size_t>(ti)]) * c + ci];
    }
  }
  auto pt = ttable.node_ptr();
  auto rows_copy = std::make_shared<std::vector<int>>(rows);
  return Tensor(detail::make_op({c, t, 1}, std::move(out), {pt}, [pt, rows_copy, c, t](Node& self) {
    Node* tab = pt.get();
    if (!tab->requires_grad) return;
    double* gt = detail::grad_buf(tab).data();
    const double* go = self.grad.data();
    for (int ci = 0; ci < c; ++ci) {
      for (int ti = 0; ti < t; ++ti) {
        gt[static_cast<std::int64_t>((*rows_copy)[static_cast<std::size_t>(ti)]) * c + ci] +=
            go[static_cast<std::int64_t>(ci) * t + ti];
      }
    }
  }));
}

// -------------------- backward --------------------

void backward(const Tensor& loss) {
  Node* root = checked(loss, "backward");
  if (root->numel != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(root->shape));
  if (!root->requires_grad) return;

  // Child-before-parent postorder over the reachable record, then a reverse
  // sweep so every node's gradient is complete before its closure runs.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto [n, i] = stack.back();
    if (i < n->parents.size()) {
      ++stack.back().second;
      Node* p = n->parents[i].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->grad.assign(static_cast<std::size_t>(n->numel), 0.0);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// -------------------- initialization --------------------

void init_uniform_fan_in(Tensor& t, int fan_in, Rng& rng) {
  if (fan_in <= 0) throw ShapeError("init_uniform_fan_in: fan_in must be positive");
  const double limit = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (double& x : t.mutable_data()) x = rng.uniform(-limit, limit);
}

void init_normal(Tensor& t, Rng& rng) {
  for (double& x : t.mutable_data()) x = rng.normal();
}

}  // namespace dancegen
