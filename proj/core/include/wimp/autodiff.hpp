#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace wimp::ad {

// Dense row-major array of doubles with rank 0, 1 or 2.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::string shape_string(std::span<const std::size_t> shape);

// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const noexcept { return id != UINT32_MAX; }
};

enum class Op : std::uint8_t {
  kConstant,
  kParameter,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kScale,
  kMulScalar,
  kConcat,
  kSlice,
  kTanh,
  kSigmoid,
  kElu,
  kSoftmax,
  kDot,
  kSum,
  kL1Distance,
  kDropout,
  kLstmCell,
};

// Records operations in execution order; backward() replays them in reverse.
// Every node is 2-D internally (vectors are n x 1). A tape is single-threaded.
class Tape {
 public:
  Tape();

  Var constant(const Tensor& t);
  Var constant(std::span<const double> values, std::size_t rows, std::size_t cols);
  Var constant_scalar(double v);
  // Leaf whose gradient is reported under `param_id` by parameter_gradients().
  Var parameter(int param_id, const Tensor& t);

  std::size_t rows(Var v) const { return nodes_[v.id].rows; }
  std::size_t cols(Var v) const { return nodes_[v.id].cols; }
  std::size_t size(Var v) const { return nodes_[v.id].rows * nodes_[v.id].cols; }
  std::span<const double> value(Var v) const;
  double scalar(Var v) const { return value(v)[0]; }
  Tensor tensor(Var v) const;
  std::size_t node_count() const noexcept { return nodes_.size(); }

  // Populates adjoints for every node reachable from `loss`, which must be
  // a 1 x 1 node. Can be called once per tape.
  void backward(Var loss);
  std::span<const double> grad(Var v) const;

  // (param_id, gradient) for every parameter leaf, in creation order.
  struct ParamGrad {
    int param_id;
    std::span<const double> grad;
  };
  std::vector<ParamGrad> parameter_gradients() const;

  // Internal: used by the op functions below.
  struct Node {
    Op op;
    bool needs_grad;
    std::uint32_t rows;
    std::uint32_t cols;
    std::uint32_t in0;
    std::uint32_t in1;
    std::size_t value_offset;
    std::size_t aux_offset;
    std::uint32_t link_offset;
    std::uint32_t link_count;
    double scalar;
    int param_id;
  };
  Var push(Op op, std::size_t rows, std::size_t cols, std::initializer_list<Var> inputs,
           std::size_t aux_size = 0, double scalar = 0.0);
  Var push_links(Op op, std::size_t rows, std::size_t cols, std::span<const Var> inputs,
                 std::size_t aux_size = 0, double scalar = 0.0);
  double* mutable_value(Var v) { return values_.data() + nodes_[v.id].value_offset; }
  double* aux(Var v) { return aux_.data() + nodes_[v.id].aux_offset; }
  const Node& node(Var v) const { return nodes_[v.id]; }

 private:
  void backward_node(std::uint32_t id);
  double* grad_ptr(std::uint32_t id) { return grads_.data() + nodes_[id].value_offset; }
  const double* val_ptr(std::uint32_t id) const { return values_.data() + nodes_[id].value_offset; }

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> aux_;
  std::vector<double> grads_;
  std::vector<std::uint32_t> links_;
  std::vector<std::uint32_t> param_nodes_;
  bool backward_done_ = false;
};

// Primitive operations. All throw Error(kShapeMismatch) on incompatible shapes.
Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
// a * s where s is a 1 x 1 node.
Var mul_scalar(Tape& t, Var a, Var s);
// Stacks row-blocks; every input must share the column count.
Var concat(Tape& t, std::span<const Var> parts);
Var concat(Tape& t, std::initializer_list<Var> parts);
// Rows [start, start + count).
Var slice(Tape& t, Var a, std::size_t start, std::size_t count);
std::vector<Var> split(Tape& t, Var a, std::span<const std::size_t> sizes);
Var tanh(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var elu(Tape& t, Var a, double alpha = 1.0);
// axis 0 normalizes each column, axis 1 each row.
Var softmax(Tape& t, Var a, int axis = 0);
Var dot(Tape& t, Var a, Var b);
Var sum(Tape& t, Var a);
Var l1_distance(Tape& t, Var a, Var b);
// Inverted dropout: zeroes entries with probability `rate`, scales survivors by
// 1/(1-rate). rate == 0 returns `a` unchanged without recording a node.
Var dropout(Tape& t, Var a, double rate, std::mt19937_64& rng);

struct LstmOutput {
  Var h;
  Var c;
};
// One step of the standard gated recurrence. `weights` is 4H x (in + H) with
// gate blocks ordered input, forget, cell, output; `bias` is 4H.
LstmOutput lstm_cell(Tape& t, Var x, Var h, Var c, Var weights, Var bias);

}  // namespace wimp::ad
