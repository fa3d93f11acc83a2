#pragma once

// Finite-difference checks for every differentiable graph operator and
// for the gradient-penalty second-order path. Shared by the unit tests
// and the acceptance suite.

#include <functional>
#include <string>
#include <vector>

#include "testutil.hpp"
#include "upr/diff.hpp"
#include "upr/rng.hpp"

namespace uprtest {

using upr::Rng;
using upr::diff::Tape;
using upr::diff::Tensor;
using upr::diff::Var;

struct FdReport {
  int instances = 0;
  double max_err = 0.0;
  std::string worst_case;

  void absorb(const std::string& name, double err) {
    ++instances;
    if (err > max_err) {
      max_err = err;
      worst_case = name;
    }
  }
};

// One operator case: builds a scalar graph from a single parameter
// tensor; the builder must be deterministic so finite differences can
// re-evaluate it.
struct OpCase {
  std::string name;
  int rows, cols;
  double lo, hi;
  std::function<Var(Tape&, Var)> build;
};

inline std::vector<OpCase> make_op_cases(Rng& rng) {
  std::vector<OpCase> cases;
  // projects through a random-but-fixed tensor so that every output
  // coordinate affects the scalar; reseeded per call so the builder is
  // deterministic under finite-difference re-evaluation
  const std::uint64_t probe_seed = rng.next_u64();
  auto probe = [probe_seed](Tape& t, Var y) {
    Rng pr(probe_seed);
    Tensor c = random_tensor(pr, y.rows(), y.cols(), -1.0, 1.0);
    return t.sum_all(t.mul(y, t.constant(std::move(c))));
  };
  auto cst = [&](int r, int c, double lo = -1.0, double hi = 1.0) {
    return random_tensor(rng, r, c, lo, hi);
  };

  cases.push_back({"add", 3, 4, -1, 1, [probe, b = cst(3, 4)](Tape& t, Var p) {
                     return probe(t, t.add(p, t.constant(b)));
                   }});
  cases.push_back({"sub.lhs", 3, 4, -1, 1, [probe, b = cst(3, 4)](Tape& t, Var p) {
                     return probe(t, t.sub(p, t.constant(b)));
                   }});
  cases.push_back({"sub.rhs", 3, 4, -1, 1, [probe, b = cst(3, 4)](Tape& t, Var p) {
                     return probe(t, t.sub(t.constant(b), p));
                   }});
  cases.push_back({"mul", 3, 4, -1, 1, [probe, b = cst(3, 4)](Tape& t, Var p) {
                     return probe(t, t.mul(p, t.constant(b)));
                   }});
  cases.push_back({"scale", 2, 5, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.scale(p, -1.7));
                   }});
  cases.push_back({"add_scalar", 2, 5, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.add_scalar(p, 0.4));
                   }});
  cases.push_back({"matmul_nn.lhs", 3, 4, -1, 1, [probe, b = cst(4, 2)](Tape& t, Var p) {
                     return probe(t, t.matmul_nn(p, t.constant(b)));
                   }});
  cases.push_back({"matmul_nn.rhs", 4, 2, -1, 1, [probe, a = cst(3, 4)](Tape& t, Var p) {
                     return probe(t, t.matmul_nn(t.constant(a), p));
                   }});
  cases.push_back({"matmul_nt.lhs", 3, 4, -1, 1, [probe, b = cst(2, 4)](Tape& t, Var p) {
                     return probe(t, t.matmul_nt(p, t.constant(b)));
                   }});
  cases.push_back({"matmul_nt.rhs", 2, 4, -1, 1, [probe, a = cst(3, 4)](Tape& t, Var p) {
                     return probe(t, t.matmul_nt(t.constant(a), p));
                   }});
  cases.push_back({"matmul_tn.lhs", 4, 3, -1, 1, [probe, b = cst(4, 2)](Tape& t, Var p) {
                     return probe(t, t.matmul_tn(p, t.constant(b)));
                   }});
  cases.push_back({"matmul_tn.rhs", 4, 2, -1, 1, [probe, a = cst(4, 3)](Tape& t, Var p) {
                     return probe(t, t.matmul_tn(t.constant(a), p));
                   }});
  cases.push_back({"add_rowvec.mat", 3, 4, -1, 1, [probe, b = cst(1, 4)](Tape& t, Var p) {
                     return probe(t, t.add_rowvec(p, t.constant(b)));
                   }});
  cases.push_back({"add_rowvec.vec", 1, 4, -1, 1, [probe, a = cst(3, 4)](Tape& t, Var p) {
                     return probe(t, t.add_rowvec(t.constant(a), p));
                   }});
  cases.push_back({"col_sums", 3, 4, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.col_sums(p));
                   }});
  cases.push_back({"broadcast_rows", 1, 4, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.broadcast_rows(p, 3));
                   }});
  cases.push_back({"row_sums", 3, 4, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.row_sums(p));
                   }});
  cases.push_back({"broadcast_cols", 3, 1, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.broadcast_cols(p, 4));
                   }});
  cases.push_back({"sum_all", 3, 4, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.sum_all(p));
                   }});
  cases.push_back({"broadcast_all", 1, 1, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.broadcast_all(p, 3, 4));
                   }});
  cases.push_back({"tanh", 3, 4, -2, 2, [probe](Tape& t, Var p) {
                     return probe(t, t.tanh(p));
                   }});
  // keep relu inputs away from the kink so central differences are valid
  cases.push_back({"relu.pos", 3, 4, 0.2, 2.0, [probe](Tape& t, Var p) {
                     return probe(t, t.relu(p));
                   }});
  cases.push_back({"relu.neg", 3, 4, -2.0, -0.2, [probe](Tape& t, Var p) {
                     return probe(t, t.relu(p));
                   }});
  cases.push_back({"log", 3, 4, 0.5, 2.0, [probe](Tape& t, Var p) {
                     return probe(t, t.log(p));
                   }});
  cases.push_back({"reciprocal", 3, 4, 0.5, 2.0, [probe](Tape& t, Var p) {
                     return probe(t, t.reciprocal(p));
                   }});
  cases.push_back({"sqrt", 3, 4, 0.5, 2.0, [probe](Tape& t, Var p) {
                     return probe(t, t.sqrt(p));
                   }});
  cases.push_back({"softmax_rows", 3, 5, -2, 2, [probe](Tape& t, Var p) {
                     return probe(t, t.softmax_rows(p));
                   }});
  cases.push_back({"im2col", 5, 3, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.im2col(p, 3));
                   }});
  cases.push_back({"col2im", 5, 9, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.col2im(p, 3));
                   }});
  cases.push_back({"concat_cols", 3, 2, -1, 1, [probe, b = cst(3, 3)](Tape& t, Var p) {
                     Var parts[2] = {p, t.constant(b)};
                     return probe(t, t.concat_cols(parts));
                   }});
  cases.push_back({"slice_cols", 3, 5, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.slice_cols(p, 1, 4));
                   }});
  cases.push_back({"pad_cols", 3, 2, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.pad_cols(p, 2, 6));
                   }});
  cases.push_back({"concat_rows", 2, 3, -1, 1, [probe, b = cst(3, 3)](Tape& t, Var p) {
                     Var parts[2] = {p, t.constant(b)};
                     return probe(t, t.concat_rows(parts));
                   }});
  // duplicate index exercises gradient accumulation in the adjoint
  cases.push_back({"take_rows", 4, 3, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.take_rows(p, {2, 0, 2, 3}));
                   }});
  cases.push_back({"scatter_rows_add", 3, 4, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.scatter_rows_add(p, {1, 4, 1}, 6));
                   }});
  cases.push_back({"segment_mean", 6, 3, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.segment_mean(p, {2, 3, 6}));
                   }});
  cases.push_back({"segment_spread", 3, 4, -1, 1, [probe](Tape& t, Var p) {
                     return probe(t, t.segment_spread(p, {1, 4, 6}));
                   }});
  return cases;
}

inline FdReport run_op_fd_suite(int instances_per_case, std::uint64_t seed) {
  Rng case_rng(seed);
  auto cases = make_op_cases(case_rng);
  FdReport report;
  Rng rng(seed + 1);
  for (const auto& c : cases) {
    for (int inst = 0; inst < instances_per_case; ++inst) {
      const Tensor x0 = random_tensor(rng, c.rows, c.cols, c.lo, c.hi);

      Tape tape;
      Var p = tape.parameter(x0);
      Var f = c.build(tape, p);
      Var g = tape.gradient(f, p);

      auto feval = [&](const std::vector<double>& xs) {
        Tape t2;
        Tensor tx(c.rows, c.cols);
        tx.v = xs;
        return c.build(t2, t2.parameter(std::move(tx))).value().item();
      };
      const auto fd = fd_gradient(feval, x0.v);
      report.absorb(c.name, max_rel_err(g.value().v, fd));
    }
  }
  return report;
}

// Small conv-bank-style discriminator used for the gradient-penalty
// finite-difference check. Parameters packed in one flat vector.
struct GpNet {
  int seq_len = 6, in_dim = 4, channels = 3;
  int kernels[2] = {3, 5};

  int param_count() const {
    int n = 0;
    for (int k : kernels) n += channels * k * in_dim + channels;  // conv W + b
    n += 2 * channels + 1;                                        // head w + b
    return n;
  }

  // returns (d_out, input_var)
  std::pair<Var, Var> build(Tape& t, const Tensor& input, const std::vector<double>& theta) const {
    std::size_t off = 0;
    auto take = [&](int r, int c) {
      Tensor w(r, c);
      for (double& x : w.v) x = theta[off++];
      return t.parameter(std::move(w));
    };
    Var x = t.constant(input);
    std::vector<Var> banks;
    for (int k : kernels) {
      Var w = take(channels, k * in_dim);
      Var b = take(1, channels);
      banks.push_back(t.conv1d(x, w, b, k));
    }
    Var h = t.tanh(t.concat_cols(banks));
    Var pooled = t.scale(t.col_sums(h), 1.0 / seq_len);
    Var hw = take(1, 2 * channels);
    Var hb = take(1, 1);
    Var out = t.affine(pooled, hw, hb);
    return {out, x};
  }
};

inline FdReport run_gp_fd_suite(int instances, std::uint64_t seed) {
  FdReport report;
  Rng rng(seed);
  GpNet net;
  for (int inst = 0; inst < instances; ++inst) {
    const Tensor input = random_tensor(rng, net.seq_len, net.in_dim, 0.0, 1.0);
    std::vector<double> theta(net.param_count());
    for (double& x : theta) x = rng.uniform(-0.7, 0.7);

    Tape tape;
    auto [out, x] = net.build(tape, input, theta);
    Var penalty = tape.gradient_penalty(out, x);

    // collect parameter nodes in creation order (they are the only
    // Parameter nodes on this tape)
    std::vector<Var> params;
    for (int id = 0; id < static_cast<int>(tape.node_count()); ++id)
      if (tape.node(id).op == upr::diff::Op::Parameter) params.emplace_back(&tape, id);
    auto grads = tape.gradient(penalty, params);
    std::vector<double> flat;
    for (const Var& g : grads)
      flat.insert(flat.end(), g.value().v.begin(), g.value().v.end());

    auto feval = [&](const std::vector<double>& th) {
      Tape t2;
      auto [o2, x2] = net.build(t2, input, th);
      return t2.gradient_penalty(o2, x2).value().item();
    };
    const auto fd = fd_gradient(feval, theta);
    report.absorb("gradient_penalty", max_rel_err(flat, fd));
  }
  return report;
}

}  // namespace uprtest
