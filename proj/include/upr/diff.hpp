#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Reverse-mode differentiable computation engine. Nodes are evaluated
// eagerly as they are created; gradients are built as new graph nodes,
// so differentiating a gradient expression again (needed by the WGAN
// gradient penalty) is ordinary reverse mode over the extended graph.
namespace upr::diff {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnsupportedOperatorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense matrix of doubles; scalars are [1,1], row vectors [1,n].
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {
    if (r < 1 || c < 1) throw ShapeError("tensor dimensions must be positive");
  }

  static Tensor scalar(double x) {
    Tensor t(1, 1);
    t.v[0] = x;
    return t;
  }
  static Tensor from(int r, int c, std::initializer_list<double> xs) {
    Tensor t(r, c);
    if (xs.size() != t.v.size()) throw ShapeError("initializer size mismatch");
    std::size_t i = 0;
    for (double x : xs) t.v[i++] = x;
    return t;
  }

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  bool finite() const;
  double item() const {
    if (rows != 1 || cols != 1) throw ShapeError("item() requires a 1x1 tensor");
    return v[0];
  }
};

enum class Op : std::uint8_t {
  Constant,
  Parameter,
  Add,
  Sub,
  Mul,
  Scale,      // c * a
  AddScalar,  // a + c
  MatmulNN,   // A[m,k] * B[k,n]
  MatmulNT,   // A[m,k] * B[n,k]^T
  MatmulTN,   // A[k,m]^T * B[k,n]
  AddRowVec,  // A[m,n] + b[1,n] per row
  ColSums,    // [m,n] -> [1,n]
  BroadcastRows,
  RowSums,  // [m,n] -> [m,1]
  BroadcastCols,
  SumAll,  // -> [1,1]
  BroadcastAll,
  Tanh,
  Relu,
  Log,
  Reciprocal,
  Sqrt,
  SoftmaxRows,
  Im2Col,  // [T,C] -> [T, k*C], zero-padded, same length
  Col2Im,
  ConcatCols,
  SliceCols,  // columns [lo, hi)
  PadCols,    // embed at column lo of a wider zero matrix
  ConcatRows,
  TakeRows,
  ScatterRowsAdd,  // adjoint of TakeRows
  SegmentMean,     // per-segment mean over rows
  SegmentSpread,   // adjoint of SegmentMean
  StraightThrough, // row-wise one-hot argmax; backward = identity
};

const char* op_name(Op op);

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  int rows() const { return value().rows; }
  int cols() const { return value().cols; }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

struct Node {
  Op op = Op::Constant;
  std::vector<int> in;
  Tensor val;
  double c = 0.0;            // Scale / AddScalar constant
  int k = 0;                 // kernel size / count / slice lo / target rows
  int k2 = 0;                // slice hi / pad total / target cols
  std::vector<int> idx;      // TakeRows indices / segment ends
};

class Tape {
 public:
  Var constant(Tensor t);
  Var parameter(Tensor t);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var matmul_nn(Var a, Var b);
  Var matmul_nt(Var a, Var b);
  Var matmul_tn(Var a, Var b);
  Var add_rowvec(Var a, Var b);
  Var col_sums(Var a);
  Var broadcast_rows(Var a, int rows);
  Var row_sums(Var a);
  Var broadcast_cols(Var a, int cols);
  Var sum_all(Var a);
  Var broadcast_all(Var a, int rows, int cols);
  Var tanh(Var a);
  Var relu(Var a);
  Var log(Var a);
  Var reciprocal(Var a);
  Var sqrt(Var a);
  Var softmax_rows(Var a);
  Var im2col(Var a, int kernel);
  Var col2im(Var a, int kernel);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var a, int lo, int hi);
  Var pad_cols(Var a, int lo, int total);
  Var concat_rows(std::span<const Var> parts);
  Var take_rows(Var a, std::vector<int> idx);
  Var scatter_rows_add(Var a, std::vector<int> idx, int rows);
  Var segment_mean(Var a, std::vector<int> ends);
  Var segment_spread(Var a, std::vector<int> ends);
  Var straight_through(Var a);

  // Composites.
  Var mean_all(Var a);
  Var sq_diff(Var a, Var b);
  // x[m,in] * W[out,in]^T + b[1,out]
  Var affine(Var x, Var w, Var b);
  // 1-D convolution over time, same length, kernel odd: im2col + affine.
  // w is [out_channels, kernel*in_channels], b is [1, out_channels].
  Var conv1d(Var x, Var w, Var b, int kernel);

  // Reverse-mode gradient of scalar f w.r.t. each node in wrt. Gradients
  // are emitted as graph nodes, so the result is differentiable again.
  // require_smooth enforces that every operator on a path from a wrt node
  // to f is twice-differentiable (gradient-penalty precondition).
  std::vector<Var> gradient(Var f, std::span<const Var> wrt, bool require_smooth = false);
  Var gradient(Var f, Var wrt, bool require_smooth = false);

  // (||grad_input f|| - 1)^2 as a graph node; second-order capable.
  Var gradient_penalty(Var f, Var input);

  const Node& node(int id) const { return nodes_[id]; }
  std::size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  friend class Var;
  Var emit(Node n);
  void eval(Node& n);
  Var wrap(int id) { return Var(this, id); }
  const Tensor& val(int id) const { return nodes_[id].val; }

  std::vector<Node> nodes_;
};

// Free-function sugar; operands must share a tape.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);

}  // namespace upr::diff
