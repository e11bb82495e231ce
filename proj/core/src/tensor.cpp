#include "kdseq/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace kdseq {

namespace {

std::atomic<uint64_t> g_seq{1};
thread_local int g_nograd_depth = 0;

uint64_t next_seq() { return g_seq.fetch_add(1, std::memory_order_relaxed); }

std::string shape_str(size_t r, size_t c) {
  return "(" + std::to_string(r) + "," + std::to_string(c) + ")";
}

std::string shape_str(const Tensor& t) { return shape_str(t.rows(), t.cols()); }

NodePtr new_leaf(size_t rows, size_t cols, std::vector<double> v, bool requires_grad) {
  if (v.size() != rows * cols)
    throw contract_error("tensor: " + std::to_string(v.size()) + " values for shape " +
                         shape_str(rows, cols));
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(v);
  n->requires_grad = requires_grad && !NoGradGuard::active();
  n->seq = next_seq();
  return n;
}

}  // namespace

NoGradGuard::NoGradGuard() { g_nograd_depth++; }
NoGradGuard::~NoGradGuard() { g_nograd_depth--; }
bool NoGradGuard::active() { return g_nograd_depth > 0; }

Tensor::Tensor(size_t rows, size_t cols, std::vector<double> v, bool requires_grad)
    : n_(new_leaf(rows, cols, std::move(v), requires_grad)) {}

Tensor::Tensor(size_t rows, size_t cols, double fill, bool requires_grad)
    : n_(new_leaf(rows, cols, std::vector<double>(rows * cols, fill), requires_grad)) {}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(1, 1, std::vector<double>{v}, requires_grad);
}

Tensor Tensor::from_mat(const Mat& m, bool requires_grad) {
  return Tensor(m.rows, m.cols, m.v, requires_grad);
}

double Tensor::item() const {
  if (!n_ || n_->size() != 1)
    throw contract_error("item: tensor is " + (n_ ? shape_str(*this) : std::string("undefined")) +
                         ", not scalar");
  return n_->value[0];
}

const std::vector<double>& Tensor::grad() const {
  n_->ensure_grad();
  return n_->grad;
}

void Tensor::zero_grad() { n_->grad.assign(n_->size(), 0.0); }

Mat Tensor::to_mat() const {
  Mat m(n_->rows, n_->cols);
  m.v = n_->value;
  return m;
}

Tensor make_op(const char* name, size_t rows, size_t cols, std::vector<double> value,
               std::vector<Tensor> inputs, std::function<void(Node&)> backprop) {
  if (value.size() != rows * cols)
    throw contract_error(std::string(name) + ": " + std::to_string(value.size()) +
                         " values for shape " + shape_str(rows, cols));
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  n->op = name;
  n->seq = next_seq();
  bool rg = false;
  if (!NoGradGuard::active())
    for (const auto& t : inputs)
      if (t.requires_grad()) rg = true;
  if (rg) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (const auto& t : inputs) n->inputs.push_back(t.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(n);
}

namespace {

enum class BC { same, row, scalar };

BC bcast_of(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return BC::same;
  if (b.rows() == 1 && b.cols() == a.cols()) return BC::row;
  if (b.rows() == 1 && b.cols() == 1) return BC::scalar;
  throw shape_error(std::string(op) + ": shapes " + shape_str(a) + " vs " + shape_str(b));
}

size_t bidx(BC bc, size_t r, size_t c, size_t cols) {
  switch (bc) {
    case BC::same: return r * cols + c;
    case BC::row: return c;
    default: return 0;
  }
}

// fv(a,b) -> out; da(a,b) -> d out/d a; db(a,b) -> d out/d b
template <class F, class DA, class DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F fv, DA da, DB db) {
  BC bc = bcast_of(name, a, b);
  size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t r = 0; r < R; r++)
    for (size_t c = 0; c < C; c++)
      out[r * C + c] = fv(av[r * C + c], bv[bidx(bc, r, c, C)]);
  return make_op(name, R, C, std::move(out), {a, b}, [bc, R, C, da, db](Node& self) {
    Node* na = self.inputs[0].get();
    Node* nb = self.inputs[1].get();
    if (na->requires_grad) {
      na->ensure_grad();
      for (size_t r = 0; r < R; r++)
        for (size_t c = 0; c < C; c++) {
          size_t i = r * C + c;
          na->grad[i] += self.grad[i] * da(na->value[i], nb->value[bidx(bc, r, c, C)]);
        }
    }
    if (nb->requires_grad) {
      nb->ensure_grad();
      for (size_t r = 0; r < R; r++)
        for (size_t c = 0; c < C; c++) {
          size_t i = r * C + c;
          nb->grad[bidx(bc, r, c, C)] +=
              self.grad[i] * db(na->value[i], nb->value[bidx(bc, r, c, C)]);
        }
    }
  });
}

template <class F, class DF>
Tensor unary_op(const char* name, const Tensor& a, F fv, DF df) {
  size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  const auto& av = a.values();
  for (size_t i = 0; i < R * C; i++) out[i] = fv(av[i]);
  return make_op(name, R, C, std::move(out), {a}, [df](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    na->ensure_grad();
    for (size_t i = 0; i < self.value.size(); i++)
      na->grad[i] += self.grad[i] * df(na->value[i], self.value[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw shape_error("matmul: shapes " + shape_str(a) + " vs " + shape_str(b));
  size_t M = a.rows(), K = a.cols(), N = b.cols();
  std::vector<double> out(M * N, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < M; i++)
    for (size_t l = 0; l < K; l++) {
      double x = av[i * K + l];
      if (x == 0.0) continue;
      for (size_t j = 0; j < N; j++) out[i * N + j] += x * bv[l * N + j];
    }
  return make_op("matmul", M, N, std::move(out), {a, b}, [M, K, N](Node& self) {
    Node* na = self.inputs[0].get();
    Node* nb = self.inputs[1].get();
    if (na->requires_grad) {
      na->ensure_grad();
      for (size_t i = 0; i < M; i++)
        for (size_t j = 0; j < N; j++) {
          double g = self.grad[i * N + j];
          if (g == 0.0) continue;
          for (size_t l = 0; l < K; l++) na->grad[i * K + l] += g * nb->value[l * N + j];
        }
    }
    if (nb->requires_grad) {
      nb->ensure_grad();
      for (size_t i = 0; i < M; i++)
        for (size_t l = 0; l < K; l++) {
          double x = na->value[i * K + l];
          if (x == 0.0) continue;
          for (size_t j = 0; j < N; j++) nb->grad[l * N + j] += x * self.grad[i * N + j];
        }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_const(const Tensor& a, double c) {
  return unary_op(
      "add_const", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw contract_error("concat_cols: no inputs");
  size_t R = parts[0].rows(), C = 0;
  for (const auto& p : parts) {
    if (p.rows() != R)
      throw shape_error("concat_cols: shapes " + shape_str(parts[0]) + " vs " + shape_str(p));
    C += p.cols();
  }
  std::vector<double> out(R * C);
  std::vector<size_t> widths;
  size_t off = 0;
  for (const auto& p : parts) {
    size_t w = p.cols();
    widths.push_back(w);
    for (size_t r = 0; r < R; r++)
      for (size_t c = 0; c < w; c++) out[r * C + off + c] = p(r, c);
    off += w;
  }
  return make_op("concat_cols", R, C, std::move(out), parts, [R, C, widths](Node& self) {
    size_t off = 0;
    for (size_t k = 0; k < self.inputs.size(); k++) {
      Node* p = self.inputs[k].get();
      size_t w = widths[k];
      if (p->requires_grad) {
        p->ensure_grad();
        for (size_t r = 0; r < R; r++)
          for (size_t c = 0; c < w; c++) p->grad[r * w + c] += self.grad[r * C + off + c];
      }
      off += w;
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw contract_error("concat_rows: no inputs");
  size_t C = parts[0].cols(), R = 0;
  for (const auto& p : parts) {
    if (p.cols() != C)
      throw shape_error("concat_rows: shapes " + shape_str(parts[0]) + " vs " + shape_str(p));
    R += p.rows();
  }
  std::vector<double> out;
  out.reserve(R * C);
  std::vector<size_t> heights;
  for (const auto& p : parts) {
    heights.push_back(p.rows());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return make_op("concat_rows", R, C, std::move(out), parts, [C, heights](Node& self) {
    size_t off = 0;
    for (size_t k = 0; k < self.inputs.size(); k++) {
      Node* p = self.inputs[k].get();
      size_t h = heights[k];
      if (p->requires_grad) {
        p->ensure_grad();
        for (size_t i = 0; i < h * C; i++) p->grad[i] += self.grad[off * C + i];
      }
      off += h;
    }
  });
}

Tensor slice_cols(const Tensor& a, size_t c0, size_t c1) {
  if (c0 >= c1 || c1 > a.cols())
    throw shape_error("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                      ") of " + shape_str(a));
  size_t R = a.rows(), C = a.cols(), W = c1 - c0;
  std::vector<double> out(R * W);
  for (size_t r = 0; r < R; r++)
    for (size_t c = 0; c < W; c++) out[r * W + c] = a(r, c0 + c);
  return make_op("slice_cols", R, W, std::move(out), {a}, [R, C, W, c0](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    na->ensure_grad();
    for (size_t r = 0; r < R; r++)
      for (size_t c = 0; c < W; c++) na->grad[r * C + c0 + c] += self.grad[r * W + c];
  });
}

Tensor slice_rows(const Tensor& a, size_t r0, size_t r1) {
  if (r0 >= r1 || r1 > a.rows())
    throw shape_error("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                      ") of " + shape_str(a));
  size_t C = a.cols(), H = r1 - r0;
  std::vector<double> out(a.values().begin() + r0 * C, a.values().begin() + r1 * C);
  return make_op("slice_rows", H, C, std::move(out), {a}, [C, H, r0](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    na->ensure_grad();
    for (size_t i = 0; i < H * C; i++) na->grad[r0 * C + i] += self.grad[i];
  });
}

Tensor reverse_rows(const Tensor& a) {
  size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  for (size_t r = 0; r < R; r++)
    for (size_t c = 0; c < C; c++) out[r * C + c] = a(R - 1 - r, c);
  return make_op("reverse_rows", R, C, std::move(out), {a}, [R, C](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    na->ensure_grad();
    for (size_t r = 0; r < R; r++)
      for (size_t c = 0; c < C; c++) na->grad[(R - 1 - r) * C + c] += self.grad[r * C + c];
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a,
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_t(const Tensor& a) {
  return unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_t(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
  // Non-positive reals are misuse and fail loud. NaN propagates instead so a
  // diverging training step surfaces as a non-finite loss, not a domain error.
  for (double v : a.values())
    if (v <= 0.0)
      throw numeric_domain_error("log: non-positive input " + format_double(v));
  return unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary_op(
      "clamp_min", a, [lo](double x) { return x < lo ? lo : x; },
      [lo](double x, double) { return x >= lo ? 1.0 : 0.0; });
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_op("sum", 1, 1, {s}, {a}, [](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    na->ensure_grad();
    for (double& g : na->grad) g += self.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  double n = static_cast<double>(a.size());
  return make_op("mean", 1, 1, {s / n}, {a}, [n](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    na->ensure_grad();
    for (double& g : na->grad) g += self.grad[0] / n;
  });
}

Tensor row_max(const Tensor& a) {
  size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R);
  std::vector<size_t> arg(R);
  for (size_t r = 0; r < R; r++) {
    size_t best = 0;
    for (size_t c = 1; c < C; c++)
      if (a(r, c) > a(r, best)) best = c;
    arg[r] = best;
    out[r] = a(r, best);
  }
  return make_op("row_max", R, 1, std::move(out), {a}, [C, arg](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    na->ensure_grad();
    for (size_t r = 0; r < arg.size(); r++) na->grad[r * C + arg[r]] += self.grad[r];
  });
}

Tensor softmax_rows(const Tensor& a) {
  size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  for (size_t r = 0; r < R; r++) {
    double m = a(r, 0);
    for (size_t c = 1; c < C; c++) m = std::max(m, a(r, c));
    double s = 0.0;
    for (size_t c = 0; c < C; c++) {
      out[r * C + c] = std::exp(a(r, c) - m);
      s += out[r * C + c];
    }
    for (size_t c = 0; c < C; c++) out[r * C + c] /= s;
  }
  return make_op("softmax_rows", R, C, std::move(out), {a}, [R, C](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    na->ensure_grad();
    for (size_t r = 0; r < R; r++) {
      double dot = 0.0;
      for (size_t c = 0; c < C; c++) dot += self.grad[r * C + c] * self.value[r * C + c];
      for (size_t c = 0; c < C; c++) {
        size_t i = r * C + c;
        na->grad[i] += self.value[i] * (self.grad[i] - dot);
      }
    }
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * C);
  for (size_t r = 0; r < R; r++) {
    double m = a(r, 0);
    for (size_t c = 1; c < C; c++) m = std::max(m, a(r, c));
    double s = 0.0;
    for (size_t c = 0; c < C; c++) s += std::exp(a(r, c) - m);
    double ls = m + std::log(s);
    for (size_t c = 0; c < C; c++) out[r * C + c] = a(r, c) - ls;
  }
  return make_op("log_softmax_rows", R, C, std::move(out), {a}, [R, C](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    na->ensure_grad();
    for (size_t r = 0; r < R; r++) {
      double gsum = 0.0;
      for (size_t c = 0; c < C; c++) gsum += self.grad[r * C + c];
      for (size_t c = 0; c < C; c++) {
        size_t i = r * C + c;
        na->grad[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
      }
    }
  });
}

Tensor row_cosine_mean(const Tensor& a, const Tensor& b, size_t* zero_rows) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw shape_error("row_cosine_mean: shapes " + shape_str(a) + " vs " + shape_str(b));
  size_t R = a.rows(), C = a.cols();
  double total = 0.0;
  size_t zeros = 0;
  for (size_t r = 0; r < R; r++) {
    double na2 = 0.0, nb2 = 0.0, dot = 0.0;
    for (size_t c = 0; c < C; c++) {
      na2 += a(r, c) * a(r, c);
      nb2 += b(r, c) * b(r, c);
      dot += a(r, c) * b(r, c);
    }
    if (na2 == 0.0 || nb2 == 0.0) {
      zeros++;
      continue;  // orthogonal convention: cosine 0
    }
    total += dot / std::sqrt(na2 * nb2);
  }
  if (zero_rows) *zero_rows = zeros;
  double rn = static_cast<double>(R);
  return make_op("row_cosine_mean", 1, 1, {total / rn}, {a, b}, [R, C, rn](Node& self) {
    Node* na = self.inputs[0].get();
    Node* nb = self.inputs[1].get();
    double g0 = self.grad[0] / rn;
    for (size_t r = 0; r < R; r++) {
      double na2 = 0.0, nb2 = 0.0, dot = 0.0;
      for (size_t c = 0; c < C; c++) {
        double x = na->value[r * C + c], y = nb->value[r * C + c];
        na2 += x * x;
        nb2 += y * y;
        dot += x * y;
      }
      if (na2 == 0.0 || nb2 == 0.0) continue;
      double denom = std::sqrt(na2 * nb2);
      double cosr = dot / denom;
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t c = 0; c < C; c++)
          na->grad[r * C + c] +=
              g0 * (nb->value[r * C + c] / denom - cosr * na->value[r * C + c] / na2);
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (size_t c = 0; c < C; c++)
          nb->grad[r * C + c] +=
              g0 * (na->value[r * C + c] / denom - cosr * nb->value[r * C + c] / nb2);
      }
    }
  });
}

Tensor detach(const Tensor& a) {
  auto n = new_leaf(a.rows(), a.cols(), a.values(), false);
  n->op = "detach";
  return Tensor(n);
}

Tensor& ParameterSet::add(const std::string& name, Tensor t) {
  if (items_.count(name)) throw contract_error("parameter '" + name + "' already registered");
  t.node()->requires_grad = true;
  auto [it, ok] = items_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = items_.find(name);
  if (it == items_.end()) throw contract_error("no parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw contract_error("no parameter '" + name + "'");
  return it->second;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

double ParameterSet::grad_l2_norm() const {
  double s = 0.0;
  for (const auto& [name, t] : items_) {
    const Node* n = t.node().get();
    for (double g : n->grad) s += g * g;
  }
  return std::sqrt(s);
}

uint64_t ParameterSet::value_hash() const {
  uint64_t h = 1469598103934665603ull;
  for (const auto& [name, t] : items_) {
    h = fnv1a64(name.data(), name.size(), h);
    uint64_t dims[2] = {t.rows(), t.cols()};
    h = fnv1a64(dims, sizeof(dims), h);
    h = fnv1a64(t.values().data(), t.values().size() * sizeof(double), h);
  }
  return h;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(items_.size());
  for (const auto& [name, t] : items_) out.push_back(name);
  return out;
}

void backward(const Tensor& loss, ParameterSet& params) {
  if (!loss.defined()) throw contract_error("backward: undefined loss");
  if (loss.size() != 1)
    throw contract_error("backward: loss must be scalar, got " + shape_str(loss));
  Node* root = loss.node().get();
  if (!root->requires_grad)
    throw contract_error("backward: loss does not depend on any trainable tensor");
  if (root->backward_run)
    throw state_error("backward: this loss was already differentiated; rebuild the forward graph");

  // Reachable differentiable subgraph, reverse creation order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      Node* p = in.get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back(p);
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

  // Interior grads are per-pass scratch; leaf grads accumulate across passes.
  for (Node* n : order)
    if (n->backprop) n->grad.assign(n->size(), 0.0);
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (Node* n : order)
    if (n->backprop) n->backprop(*n);
  root->backward_run = true;

  // Parameters never reached keep (or get) exact-zero grads.
  for (auto& [name, t] : params) t.node()->ensure_grad();
}

GradCheck grad_check(const std::function<Tensor(ParameterSet&)>& f, ParameterSet& params,
                     double h, double tol) {
  params.zero_grad();
  Tensor loss = f(params);
  if (loss.size() != 1) throw contract_error("grad_check: f must return a scalar");
  if (!std::isfinite(loss.item()))
    throw numeric_domain_error("grad_check: non-finite loss at the base point");
  backward(loss, params);

  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, t] : params) analytic[name] = t.grad();

  GradCheck res;
  for (auto& [name, t] : params) {
    auto& vals = t.values_mut();
    for (size_t i = 0; i < vals.size(); i++) {
      double x0 = vals[i];
      double fp, fm;
      {
        NoGradGuard ng;
        vals[i] = x0 + h;
        fp = f(params).item();
        vals[i] = x0 - h;
        fm = f(params).item();
      }
      vals[i] = x0;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw numeric_domain_error("grad_check: non-finite evaluation at " + name + "[" +
                                   std::to_string(i) + "]");
      double num = (fp - fm) / (2.0 * h);
      double a = analytic[name][i];
      double rel = std::abs(a - num) / std::max(1.0, std::abs(a));
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = name;
        res.worst_index = i;
      }
    }
  }
  res.ok = res.max_rel_err <= tol;
  return res;
}

}  // namespace kdseq
