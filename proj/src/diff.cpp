#include "upr/diff.hpp"

#include <cmath>
#include <cstdio>

#include "upr/kernels.hpp"

namespace upr::diff {

bool Tensor::finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Parameter: return "parameter";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::MatmulNN: return "matmul_nn";
    case Op::MatmulNT: return "matmul_nt";
    case Op::MatmulTN: return "matmul_tn";
    case Op::AddRowVec: return "add_rowvec";
    case Op::ColSums: return "col_sums";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::RowSums: return "row_sums";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::SumAll: return "sum_all";
    case Op::BroadcastAll: return "broadcast_all";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Log: return "log";
    case Op::Reciprocal: return "reciprocal";
    case Op::Sqrt: return "sqrt";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::Im2Col: return "im2col";
    case Op::Col2Im: return "col2im";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::PadCols: return "pad_cols";
    case Op::ConcatRows: return "concat_rows";
    case Op::TakeRows: return "take_rows";
    case Op::ScatterRowsAdd: return "scatter_rows_add";
    case Op::SegmentMean: return "segment_mean";
    case Op::SegmentSpread: return "segment_spread";
    case Op::StraightThrough: return "straight_through";
  }
  return "?";
}

namespace {

bool twice_differentiable(Op op) {
  switch (op) {
    case Op::Relu:
    case Op::StraightThrough:
      return false;
    default:
      return true;
  }
}

[[noreturn]] void shape_fail(Op op, int node_id, const Tensor& a, const Tensor& b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s (node %d): incompatible shapes [%d,%d] and [%d,%d]",
                op_name(op), node_id, a.rows, a.cols, b.rows, b.cols);
  throw ShapeError(buf);
}

void check_segments(const std::vector<int>& ends, int rows, const char* who) {
  if (ends.empty()) throw ShapeError(std::string(who) + ": empty segment list");
  int prev = 0;
  for (int e : ends) {
    if (e <= prev) throw ShapeError(std::string(who) + ": segment ends must be strictly increasing");
    prev = e;
  }
  if (ends.back() != rows) throw ShapeError(std::string(who) + ": segments must cover all rows");
}

}  // namespace

const Tensor& Var::value() const { return tape_->node(id_).val; }

Var Tape::emit(Node n) {
  eval(n);
  nodes_.push_back(std::move(n));
  return wrap(static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Tensor t) {
  Node n;
  n.op = Op::Constant;
  n.val = std::move(t);
  nodes_.push_back(std::move(n));
  return wrap(static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Tensor t) {
  Node n;
  n.op = Op::Parameter;
  n.val = std::move(t);
  nodes_.push_back(std::move(n));
  return wrap(static_cast<int>(nodes_.size()) - 1);
}

void Tape::eval(Node& n) {
  const int id = static_cast<int>(nodes_.size());
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[n.in[i]].val; };
  switch (n.op) {
    case Op::Constant:
    case Op::Parameter:
      break;
    case Op::Add: {
      const Tensor &a = in(0), &b = in(1);
      if (!a.same_shape(b)) shape_fail(n.op, id, a, b);
      n.val = Tensor(a.rows, a.cols);
      kernels::add(a.v.data(), b.v.data(), n.val.v.data(), a.size());
      break;
    }
    case Op::Sub: {
      const Tensor &a = in(0), &b = in(1);
      if (!a.same_shape(b)) shape_fail(n.op, id, a, b);
      n.val = Tensor(a.rows, a.cols);
      kernels::sub(a.v.data(), b.v.data(), n.val.v.data(), a.size());
      break;
    }
    case Op::Mul: {
      const Tensor &a = in(0), &b = in(1);
      if (!a.same_shape(b)) shape_fail(n.op, id, a, b);
      n.val = Tensor(a.rows, a.cols);
      kernels::mul(a.v.data(), b.v.data(), n.val.v.data(), a.size());
      break;
    }
    case Op::Scale: {
      const Tensor& a = in(0);
      n.val = Tensor(a.rows, a.cols);
      kernels::scale(a.v.data(), n.c, n.val.v.data(), a.size());
      break;
    }
    case Op::AddScalar: {
      const Tensor& a = in(0);
      n.val = Tensor(a.rows, a.cols);
      for (std::size_t i = 0; i < a.size(); ++i) n.val.v[i] = a.v[i] + n.c;
      break;
    }
    case Op::MatmulNN: {
      const Tensor &a = in(0), &b = in(1);
      if (a.cols != b.rows) shape_fail(n.op, id, a, b);
      n.val = Tensor(a.rows, b.cols);
      for (int i = 0; i < a.rows; ++i) {
        double* out = n.val.v.data() + static_cast<std::size_t>(i) * b.cols;
        for (int l = 0; l < a.cols; ++l)
          kernels::axpy(a.at(i, l), b.v.data() + static_cast<std::size_t>(l) * b.cols, out, b.cols);
      }
      break;
    }
    case Op::MatmulNT: {
      const Tensor &a = in(0), &b = in(1);
      if (a.cols != b.cols) shape_fail(n.op, id, a, b);
      n.val = Tensor(a.rows, b.rows);
      for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.v.data() + static_cast<std::size_t>(i) * a.cols;
        for (int j = 0; j < b.rows; ++j)
          n.val.at(i, j) = kernels::dot(arow, b.v.data() + static_cast<std::size_t>(j) * b.cols, a.cols);
      }
      break;
    }
    case Op::MatmulTN: {
      const Tensor &a = in(0), &b = in(1);
      if (a.rows != b.rows) shape_fail(n.op, id, a, b);
      n.val = Tensor(a.cols, b.cols);
      for (int l = 0; l < a.rows; ++l) {
        const double* brow = b.v.data() + static_cast<std::size_t>(l) * b.cols;
        for (int i = 0; i < a.cols; ++i)
          kernels::axpy(a.at(l, i), brow, n.val.v.data() + static_cast<std::size_t>(i) * b.cols, b.cols);
      }
      break;
    }
    case Op::AddRowVec: {
      const Tensor &a = in(0), &b = in(1);
      if (b.rows != 1 || b.cols != a.cols) shape_fail(n.op, id, a, b);
      n.val = Tensor(a.rows, a.cols);
      for (int i = 0; i < a.rows; ++i)
        kernels::add(a.v.data() + static_cast<std::size_t>(i) * a.cols, b.v.data(),
                     n.val.v.data() + static_cast<std::size_t>(i) * a.cols, a.cols);
      break;
    }
    case Op::ColSums: {
      const Tensor& a = in(0);
      n.val = Tensor(1, a.cols);
      for (int i = 0; i < a.rows; ++i)
        kernels::axpy(1.0, a.v.data() + static_cast<std::size_t>(i) * a.cols, n.val.v.data(), a.cols);
      break;
    }
    case Op::BroadcastRows: {
      const Tensor& a = in(0);
      if (a.rows != 1) shape_fail(n.op, id, a, a);
      n.val = Tensor(n.k, a.cols);
      for (int i = 0; i < n.k; ++i)
        for (int c = 0; c < a.cols; ++c) n.val.at(i, c) = a.v[c];
      break;
    }
    case Op::RowSums: {
      const Tensor& a = in(0);
      n.val = Tensor(a.rows, 1);
      for (int i = 0; i < a.rows; ++i)
        n.val.v[i] = kernels::sum(a.v.data() + static_cast<std::size_t>(i) * a.cols, a.cols);
      break;
    }
    case Op::BroadcastCols: {
      const Tensor& a = in(0);
      if (a.cols != 1) shape_fail(n.op, id, a, a);
      n.val = Tensor(a.rows, n.k);
      for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < n.k; ++j) n.val.at(i, j) = a.v[i];
      break;
    }
    case Op::SumAll: {
      const Tensor& a = in(0);
      n.val = Tensor::scalar(kernels::sum(a.v.data(), a.size()));
      break;
    }
    case Op::BroadcastAll: {
      const Tensor& a = in(0);
      if (a.rows != 1 || a.cols != 1) shape_fail(n.op, id, a, a);
      n.val = Tensor(n.k, n.k2);
      for (double& x : n.val.v) x = a.v[0];
      break;
    }
    case Op::Tanh: {
      const Tensor& a = in(0);
      n.val = Tensor(a.rows, a.cols);
      for (std::size_t i = 0; i < a.size(); ++i) n.val.v[i] = std::tanh(a.v[i]);
      break;
    }
    case Op::Relu: {
      const Tensor& a = in(0);
      n.val = Tensor(a.rows, a.cols);
      for (std::size_t i = 0; i < a.size(); ++i) n.val.v[i] = a.v[i] > 0.0 ? a.v[i] : 0.0;
      break;
    }
    case Op::Log: {
      const Tensor& a = in(0);
      n.val = Tensor(a.rows, a.cols);
      for (std::size_t i = 0; i < a.size(); ++i) n.val.v[i] = std::log(a.v[i]);
      break;
    }
    case Op::Reciprocal: {
      const Tensor& a = in(0);
      n.val = Tensor(a.rows, a.cols);
      for (std::size_t i = 0; i < a.size(); ++i) n.val.v[i] = 1.0 / a.v[i];
      break;
    }
    case Op::Sqrt: {
      const Tensor& a = in(0);
      n.val = Tensor(a.rows, a.cols);
      for (std::size_t i = 0; i < a.size(); ++i) n.val.v[i] = std::sqrt(a.v[i]);
      break;
    }
    case Op::SoftmaxRows: {
      const Tensor& a = in(0);
      n.val = Tensor(a.rows, a.cols);
      for (int i = 0; i < a.rows; ++i) {
        const double* row = a.v.data() + static_cast<std::size_t>(i) * a.cols;
        double* out = n.val.v.data() + static_cast<std::size_t>(i) * a.cols;
        const double m = kernels::max(row, a.cols);
        double z = 0.0;
        for (int j = 0; j < a.cols; ++j) {
          out[j] = std::exp(row[j] - m);
          z += out[j];
        }
        kernels::scale(out, 1.0 / z, out, a.cols);
      }
      break;
    }
    case Op::Im2Col: {
      const Tensor& a = in(0);
      const int k = n.k, pad = k / 2, C = a.cols;
      n.val = Tensor(a.rows, k * C);
      for (int t = 0; t < a.rows; ++t)
        for (int dt = 0; dt < k; ++dt) {
          const int s = t + dt - pad;
          if (s < 0 || s >= a.rows) continue;
          for (int c = 0; c < C; ++c) n.val.at(t, dt * C + c) = a.at(s, c);
        }
      break;
    }
    case Op::Col2Im: {
      const Tensor& a = in(0);
      const int k = n.k, pad = k / 2;
      if (a.cols % k != 0) shape_fail(n.op, id, a, a);
      const int C = a.cols / k;
      n.val = Tensor(a.rows, C);
      for (int t = 0; t < a.rows; ++t)
        for (int dt = 0; dt < k; ++dt) {
          const int s = t + dt - pad;
          if (s < 0 || s >= a.rows) continue;
          for (int c = 0; c < C; ++c) n.val.at(s, c) += a.at(t, dt * C + c);
        }
      break;
    }
    case Op::ConcatCols: {
      int cols = 0;
      const int rows = in(0).rows;
      for (std::size_t i = 0; i < n.in.size(); ++i) {
        if (in(i).rows != rows) shape_fail(n.op, id, in(0), in(i));
        cols += in(i).cols;
      }
      n.val = Tensor(rows, cols);
      int off = 0;
      for (std::size_t i = 0; i < n.in.size(); ++i) {
        const Tensor& a = in(i);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < a.cols; ++c) n.val.at(r, off + c) = a.at(r, c);
        off += a.cols;
      }
      break;
    }
    case Op::SliceCols: {
      const Tensor& a = in(0);
      if (n.k < 0 || n.k2 > a.cols || n.k >= n.k2) shape_fail(n.op, id, a, a);
      n.val = Tensor(a.rows, n.k2 - n.k);
      for (int r = 0; r < a.rows; ++r)
        for (int c = n.k; c < n.k2; ++c) n.val.at(r, c - n.k) = a.at(r, c);
      break;
    }
    case Op::PadCols: {
      const Tensor& a = in(0);
      if (n.k < 0 || n.k + a.cols > n.k2) shape_fail(n.op, id, a, a);
      n.val = Tensor(a.rows, n.k2);
      for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) n.val.at(r, n.k + c) = a.at(r, c);
      break;
    }
    case Op::ConcatRows: {
      int rows = 0;
      const int cols = in(0).cols;
      for (std::size_t i = 0; i < n.in.size(); ++i) {
        if (in(i).cols != cols) shape_fail(n.op, id, in(0), in(i));
        rows += in(i).rows;
      }
      n.val = Tensor(rows, cols);
      int off = 0;
      for (std::size_t i = 0; i < n.in.size(); ++i) {
        const Tensor& a = in(i);
        for (int r = 0; r < a.rows; ++r)
          for (int c = 0; c < cols; ++c) n.val.at(off + r, c) = a.at(r, c);
        off += a.rows;
      }
      break;
    }
    case Op::TakeRows: {
      const Tensor& a = in(0);
      n.val = Tensor(static_cast<int>(n.idx.size()), a.cols);
      for (std::size_t i = 0; i < n.idx.size(); ++i) {
        const int r = n.idx[i];
        if (r < 0 || r >= a.rows) throw ShapeError("take_rows: index out of range");
        for (int c = 0; c < a.cols; ++c) n.val.at(static_cast<int>(i), c) = a.at(r, c);
      }
      break;
    }
    case Op::ScatterRowsAdd: {
      const Tensor& a = in(0);
      if (static_cast<int>(n.idx.size()) != a.rows) shape_fail(n.op, id, a, a);
      n.val = Tensor(n.k, a.cols);
      for (std::size_t i = 0; i < n.idx.size(); ++i) {
        const int r = n.idx[i];
        if (r < 0 || r >= n.k) throw ShapeError("scatter_rows_add: index out of range");
        kernels::axpy(1.0, a.v.data() + i * a.cols, n.val.v.data() + static_cast<std::size_t>(r) * a.cols,
                      a.cols);
      }
      break;
    }
    case Op::SegmentMean: {
      const Tensor& a = in(0);
      check_segments(n.idx, a.rows, "segment_mean");
      n.val = Tensor(static_cast<int>(n.idx.size()), a.cols);
      int start = 0;
      for (std::size_t i = 0; i < n.idx.size(); ++i) {
        const int end = n.idx[i];
        double* out = n.val.v.data() + i * a.cols;
        for (int t = start; t < end; ++t)
          kernels::axpy(1.0, a.v.data() + static_cast<std::size_t>(t) * a.cols, out, a.cols);
        kernels::scale(out, 1.0 / (end - start), out, a.cols);
        start = end;
      }
      break;
    }
    case Op::SegmentSpread: {
      const Tensor& a = in(0);
      if (static_cast<int>(n.idx.size()) != a.rows) shape_fail(n.op, id, a, a);
      check_segments(n.idx, n.k, "segment_spread");
      n.val = Tensor(n.k, a.cols);
      int start = 0;
      for (std::size_t i = 0; i < n.idx.size(); ++i) {
        const int end = n.idx[i];
        const double inv_len = 1.0 / (end - start);
        for (int t = start; t < end; ++t)
          for (int c = 0; c < a.cols; ++c) n.val.at(t, c) = a.at(static_cast<int>(i), c) * inv_len;
        start = end;
      }
      break;
    }
    case Op::StraightThrough: {
      const Tensor& a = in(0);
      n.val = Tensor(a.rows, a.cols);
      for (int i = 0; i < a.rows; ++i) {
        int best = 0;
        for (int j = 1; j < a.cols; ++j)
          if (a.at(i, j) > a.at(i, best)) best = j;
        n.val.at(i, best) = 1.0;
      }
      break;
    }
  }
}

#define UPR_BINOP(NAME, OPK)                                  \
  Var Tape::NAME(Var a, Var b) {                              \
    Node n;                                                   \
    n.op = Op::OPK;                                           \
    n.in = {a.id(), b.id()};                                  \
    return emit(std::move(n));                                \
  }

UPR_BINOP(add, Add)
UPR_BINOP(sub, Sub)
UPR_BINOP(mul, Mul)
UPR_BINOP(matmul_nn, MatmulNN)
UPR_BINOP(matmul_nt, MatmulNT)
UPR_BINOP(matmul_tn, MatmulTN)
UPR_BINOP(add_rowvec, AddRowVec)
#undef UPR_BINOP

#define UPR_UNOP(NAME, OPK)            \
  Var Tape::NAME(Var a) {              \
    Node n;                            \
    n.op = Op::OPK;                    \
    n.in = {a.id()};                   \
    return emit(std::move(n));         \
  }

UPR_UNOP(col_sums, ColSums)
UPR_UNOP(row_sums, RowSums)
UPR_UNOP(sum_all, SumAll)
UPR_UNOP(tanh, Tanh)
UPR_UNOP(relu, Relu)
UPR_UNOP(log, Log)
UPR_UNOP(reciprocal, Reciprocal)
UPR_UNOP(sqrt, Sqrt)
UPR_UNOP(softmax_rows, SoftmaxRows)
UPR_UNOP(straight_through, StraightThrough)
#undef UPR_UNOP

Var Tape::scale(Var a, double c) {
  Node n;
  n.op = Op::Scale;
  n.in = {a.id()};
  n.c = c;
  return emit(std::move(n));
}

Var Tape::add_scalar(Var a, double c) {
  Node n;
  n.op = Op::AddScalar;
  n.in = {a.id()};
  n.c = c;
  return emit(std::move(n));
}

Var Tape::broadcast_rows(Var a, int rows) {
  Node n;
  n.op = Op::BroadcastRows;
  n.in = {a.id()};
  n.k = rows;
  return emit(std::move(n));
}

Var Tape::broadcast_cols(Var a, int cols) {
  Node n;
  n.op = Op::BroadcastCols;
  n.in = {a.id()};
  n.k = cols;
  return emit(std::move(n));
}

Var Tape::broadcast_all(Var a, int rows, int cols) {
  Node n;
  n.op = Op::BroadcastAll;
  n.in = {a.id()};
  n.k = rows;
  n.k2 = cols;
  return emit(std::move(n));
}

Var Tape::im2col(Var a, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("im2col: kernel must be odd and positive");
  Node n;
  n.op = Op::Im2Col;
  n.in = {a.id()};
  n.k = kernel;
  return emit(std::move(n));
}

Var Tape::col2im(Var a, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("col2im: kernel must be odd and positive");
  Node n;
  n.op = Op::Col2Im;
  n.in = {a.id()};
  n.k = kernel;
  return emit(std::move(n));
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Node n;
  n.op = Op::ConcatCols;
  for (const Var& p : parts) n.in.push_back(p.id());
  return emit(std::move(n));
}

Var Tape::slice_cols(Var a, int lo, int hi) {
  Node n;
  n.op = Op::SliceCols;
  n.in = {a.id()};
  n.k = lo;
  n.k2 = hi;
  return emit(std::move(n));
}

Var Tape::pad_cols(Var a, int lo, int total) {
  Node n;
  n.op = Op::PadCols;
  n.in = {a.id()};
  n.k = lo;
  n.k2 = total;
  return emit(std::move(n));
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Node n;
  n.op = Op::ConcatRows;
  for (const Var& p : parts) n.in.push_back(p.id());
  return emit(std::move(n));
}

Var Tape::take_rows(Var a, std::vector<int> idx) {
  if (idx.empty()) throw ShapeError("take_rows: empty index list");
  Node n;
  n.op = Op::TakeRows;
  n.in = {a.id()};
  n.idx = std::move(idx);
  return emit(std::move(n));
}

Var Tape::scatter_rows_add(Var a, std::vector<int> idx, int rows) {
  Node n;
  n.op = Op::ScatterRowsAdd;
  n.in = {a.id()};
  n.idx = std::move(idx);
  n.k = rows;
  return emit(std::move(n));
}

Var Tape::segment_mean(Var a, std::vector<int> ends) {
  Node n;
  n.op = Op::SegmentMean;
  n.in = {a.id()};
  n.idx = std::move(ends);
  return emit(std::move(n));
}

Var Tape::segment_spread(Var a, std::vector<int> ends) {
  Node n;
  n.op = Op::SegmentSpread;
  n.in = {a.id()};
  n.k = ends.back();
  n.idx = std::move(ends);
  return emit(std::move(n));
}

Var Tape::mean_all(Var a) {
  const double inv = 1.0 / static_cast<double>(a.value().size());
  return scale(sum_all(a), inv);
}

Var Tape::sq_diff(Var a, Var b) {
  Var d = sub(a, b);
  return mul(d, d);
}

Var Tape::affine(Var x, Var w, Var b) { return add_rowvec(matmul_nt(x, w), b); }

Var Tape::conv1d(Var x, Var w, Var b, int kernel) {
  return add_rowvec(matmul_nt(im2col(x, kernel), w), b);
}

std::vector<Var> Tape::gradient(Var f, std::span<const Var> wrt, bool require_smooth) {
  if (f.tape() != this) throw ShapeError("gradient: output from another tape");
  if (f.rows() != 1 || f.cols() != 1)
    throw ShapeError("gradient: output must be a scalar, got [" + std::to_string(f.rows()) + "," +
                     std::to_string(f.cols()) + "]");

  const int fid = f.id();
  // nodes that depend on any wrt node (for the smoothness path check)
  std::vector<char> downstream(static_cast<std::size_t>(fid) + 1, 0);
  std::vector<char> is_wrt(static_cast<std::size_t>(fid) + 1, 0);
  for (const Var& w : wrt) {
    if (w.tape() != this) throw ShapeError("gradient: wrt node from another tape");
    if (w.id() <= fid) {
      downstream[w.id()] = 1;
      is_wrt[w.id()] = 1;
    }
  }
  for (int id = 0; id <= fid; ++id) {
    if (downstream[id]) continue;
    for (int i : nodes_[id].in)
      if (downstream[i]) {
        downstream[id] = 1;
        break;
      }
  }

  std::vector<Var> adj(static_cast<std::size_t>(fid) + 1);
  adj[fid] = constant(Tensor::scalar(1.0));

  auto accumulate = [&](int id, Var g) {
    if (adj[id].valid())
      adj[id] = add(adj[id], g);
    else
      adj[id] = g;
  };

  // note: creating adjoint nodes reallocates nodes_, so per-node metadata
  // is copied out before any VJP node is emitted
  struct Snap {
    Op op;
    std::vector<int> in;
    double c;
    int k;
    std::vector<int> idx;
    int val_cols;
  };
  for (int id = fid; id >= 0; --id) {
    if (!adj[id].valid()) continue;
    const Snap n{nodes_[id].op, nodes_[id].in, nodes_[id].c, nodes_[id].k, nodes_[id].idx,
                 nodes_[id].val.cols};
    if (require_smooth && downstream[id] && !is_wrt[id] && !twice_differentiable(n.op))
      throw UnsupportedOperatorError(std::string("gradient: operator '") + op_name(n.op) +
                                     "' on the differentiation path is not twice differentiable");
    Var g = adj[id];
    switch (n.op) {
      case Op::Constant:
      case Op::Parameter:
        break;
      case Op::Add:
        accumulate(n.in[0], g);
        accumulate(n.in[1], g);
        break;
      case Op::Sub:
        accumulate(n.in[0], g);
        accumulate(n.in[1], scale(g, -1.0));
        break;
      case Op::Mul:
        accumulate(n.in[0], mul(g, wrap(n.in[1])));
        accumulate(n.in[1], mul(g, wrap(n.in[0])));
        break;
      case Op::Scale:
        accumulate(n.in[0], scale(g, n.c));
        break;
      case Op::AddScalar:
        accumulate(n.in[0], g);
        break;
      case Op::MatmulNN:
        accumulate(n.in[0], matmul_nt(g, wrap(n.in[1])));
        accumulate(n.in[1], matmul_tn(wrap(n.in[0]), g));
        break;
      case Op::MatmulNT:
        accumulate(n.in[0], matmul_nn(g, wrap(n.in[1])));
        accumulate(n.in[1], matmul_tn(g, wrap(n.in[0])));
        break;
      case Op::MatmulTN:
        accumulate(n.in[0], matmul_nt(wrap(n.in[1]), g));
        accumulate(n.in[1], matmul_nn(wrap(n.in[0]), g));
        break;
      case Op::AddRowVec:
        accumulate(n.in[0], g);
        accumulate(n.in[1], col_sums(g));
        break;
      case Op::ColSums:
        accumulate(n.in[0], broadcast_rows(g, nodes_[n.in[0]].val.rows));
        break;
      case Op::BroadcastRows:
        accumulate(n.in[0], col_sums(g));
        break;
      case Op::RowSums:
        accumulate(n.in[0], broadcast_cols(g, nodes_[n.in[0]].val.cols));
        break;
      case Op::BroadcastCols:
        accumulate(n.in[0], row_sums(g));
        break;
      case Op::SumAll:
        accumulate(n.in[0],
                   broadcast_all(g, nodes_[n.in[0]].val.rows, nodes_[n.in[0]].val.cols));
        break;
      case Op::BroadcastAll:
        accumulate(n.in[0], sum_all(g));
        break;
      case Op::Tanh: {
        // 1 - tanh(x)^2, written from the forward output
        Var y = wrap(id);
        accumulate(n.in[0], mul(g, add_scalar(scale(mul(y, y), -1.0), 1.0)));
        break;
      }
      case Op::Relu: {
        const Tensor& x = nodes_[n.in[0]].val;
        Tensor mask(x.rows, x.cols);
        for (std::size_t i = 0; i < x.size(); ++i) mask.v[i] = x.v[i] > 0.0 ? 1.0 : 0.0;
        accumulate(n.in[0], mul(g, constant(std::move(mask))));
        break;
      }
      case Op::Log:
        accumulate(n.in[0], mul(g, reciprocal(wrap(n.in[0]))));
        break;
      case Op::Reciprocal: {
        Var y = wrap(id);
        accumulate(n.in[0], scale(mul(g, mul(y, y)), -1.0));
        break;
      }
      case Op::Sqrt: {
        Var y = wrap(id);
        accumulate(n.in[0], scale(mul(g, reciprocal(y)), 0.5));
        break;
      }
      case Op::SoftmaxRows: {
        Var y = wrap(id);
        Var gy = mul(g, y);
        Var s = row_sums(gy);
        accumulate(n.in[0], mul(y, sub(g, broadcast_cols(s, n.val_cols))));
        break;
      }
      case Op::Im2Col:
        accumulate(n.in[0], col2im(g, n.k));
        break;
      case Op::Col2Im:
        accumulate(n.in[0], im2col(g, n.k));
        break;
      case Op::ConcatCols: {
        int off = 0;
        for (int input : n.in) {
          const int w = nodes_[input].val.cols;
          accumulate(input, slice_cols(g, off, off + w));
          off += w;
        }
        break;
      }
      case Op::SliceCols:
        accumulate(n.in[0], pad_cols(g, n.k, nodes_[n.in[0]].val.cols));
        break;
      case Op::PadCols:
        accumulate(n.in[0], slice_cols(g, n.k, n.k + nodes_[n.in[0]].val.cols));
        break;
      case Op::ConcatRows: {
        int off = 0;
        for (int input : n.in) {
          const int r = nodes_[input].val.rows;
          std::vector<int> idx(static_cast<std::size_t>(r));
          for (int i = 0; i < r; ++i) idx[i] = off + i;
          accumulate(input, take_rows(g, std::move(idx)));
          off += r;
        }
        break;
      }
      case Op::TakeRows:
        accumulate(n.in[0], scatter_rows_add(g, n.idx, nodes_[n.in[0]].val.rows));
        break;
      case Op::ScatterRowsAdd:
        accumulate(n.in[0], take_rows(g, n.idx));
        break;
      case Op::SegmentMean:
        accumulate(n.in[0], segment_spread(g, n.idx));
        break;
      case Op::SegmentSpread:
        accumulate(n.in[0], segment_mean(g, n.idx));
        break;
      case Op::StraightThrough:
        // backward contract: d st / d input ~ identity
        accumulate(n.in[0], g);
        break;
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id() <= fid && adj[w.id()].valid()) {
      out.push_back(adj[w.id()]);
    } else {
      out.push_back(constant(Tensor(w.rows(), w.cols())));
    }
  }
  return out;
}

Var Tape::gradient(Var f, Var wrt, bool require_smooth) {
  Var arr[1] = {wrt};
  return gradient(f, std::span<const Var>(arr, 1), require_smooth)[0];
}

Var Tape::gradient_penalty(Var f, Var input) {
  Var g = gradient(f, input, /*require_smooth=*/true);
  // tiny offset keeps sqrt differentiable when the gradient vanishes
  Var norm = sqrt(add_scalar(sum_all(mul(g, g)), 1e-24));
  Var d = add_scalar(norm, -1.0);
  return mul(d, d);
}

Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }

}  // namespace upr::diff
