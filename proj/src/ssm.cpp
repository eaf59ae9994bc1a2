#include "cm/ssm.hpp"

#include <cmath>

namespace cm::ssm {

using cm::Array;
using ad::Shape;
using ad::Tensor;
using ad::detail::Node;

namespace {

void check_positive_delta(const Array& delta) {
  if (!(delta > 0.0).all()) {
    throw NonPositiveDelta("delta must be strictly positive");
  }
}

void check_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw LengthMismatch(std::string(op) + ": shapes " + ad::shape_str(a.shape()) +
                         " and " + ad::shape_str(b.shape()) + " differ");
  }
}

}  // namespace

Tensor zoh_a_bar(const Tensor& a_diag, const Tensor& delta) {
  check_same("zoh_a_bar", a_diag, delta);
  check_positive_delta(delta.value());
  Array out = (delta.value() * a_diag.value()).exp();
  return ad::record("zoh_a_bar", a_diag.shape(), std::move(out), {a_diag, delta},
                    [](Node& n) {
                      const Array& a = n.parents[0]->value;
                      const Array& d = n.parents[1]->value;
                      n.parents[0]->ensure_grad() += n.grad * d * n.value;
                      n.parents[1]->ensure_grad() += n.grad * a * n.value;
                    });
}

Tensor zoh_b_bar(const Tensor& a_diag, const Tensor& b, const Tensor& delta) {
  check_same("zoh_b_bar", a_diag, b);
  check_same("zoh_b_bar", a_diag, delta);
  check_positive_delta(delta.value());

  const Array& a = a_diag.value();
  const Array& d = delta.value();
  const Array z = d * a;
  const auto series = z.abs() < kZohSeriesEps;
  Array out = series.select(d * b.value(), ((z.exp() - 1.0) / a) * b.value());

  return ad::record("zoh_b_bar", a_diag.shape(), std::move(out), {a_diag, b, delta},
                    [](Node& n) {
                      const Array& a = n.parents[0]->value;
                      const Array& b = n.parents[1]->value;
                      const Array& d = n.parents[2]->value;
                      const Array z = d * a;
                      const auto series = z.abs() < kZohSeriesEps;
                      const Array e = z.exp();
                      const Array zero = Array::Zero(a.size());

                      n.parents[0]->ensure_grad() +=
                          n.grad * series.select(zero, b * (d * e * a - (e - 1.0)) / a.square());
                      n.parents[1]->ensure_grad() +=
                          n.grad * series.select(d, (e - 1.0) / a);
                      n.parents[2]->ensure_grad() +=
                          n.grad * series.select(b, e * b);
                    });
}

std::pair<Tensor, Tensor> zoh_discretize(const Tensor& a_diag, const Tensor& b,
                                         const Tensor& delta) {
  return {zoh_a_bar(a_diag, delta), zoh_b_bar(a_diag, b, delta)};
}

Tensor ssm_scan(const Tensor& a_bar, const Tensor& b_bar, const Tensor& c,
                const Tensor& u, const Tensor& d_skip) {
  check_same("ssm_scan", a_bar, b_bar);
  check_same("ssm_scan", a_bar, c);
  if (a_bar.rank() != 2) {
    throw LengthMismatch("ssm_scan: coefficient sequences must be (L, N)");
  }
  const Index len = a_bar.dim(0);
  const Index n_state = a_bar.dim(1);
  if (u.rank() != 1 || u.dim(0) != len) {
    throw LengthMismatch("ssm_scan: u must have length " + std::to_string(len));
  }
  if (d_skip.size() != 1) {
    throw LengthMismatch("ssm_scan: d_skip must be scalar");
  }

  // Plain scalar loops: the reference semantics of the recurrence. Every
  // state is kept for the backward sweep.
  const Array& av = a_bar.value();
  const Array& bv = b_bar.value();
  const Array& cv = c.value();
  const Array& uv = u.value();
  const double dv = d_skip.value()(0);

  Array states(len * n_state);
  Array y(len);
  for (Index k = 0; k < len; ++k) {
    double acc = 0.0;
    for (Index n = 0; n < n_state; ++n) {
      const double prev = k == 0 ? 0.0 : states((k - 1) * n_state + n);
      const double x = av(k * n_state + n) * prev + bv(k * n_state + n) * uv(k);
      states(k * n_state + n) = x;
      acc += cv(k * n_state + n) * x;
    }
    y(k) = acc + dv * uv(k);
  }

  return ad::record(
      "ssm_scan", {len}, std::move(y), {a_bar, b_bar, c, u, d_skip},
      [len, n_state](Node& n) {
        const Array& av = n.parents[0]->value;
        const Array& bv = n.parents[1]->value;
        const Array& cv = n.parents[2]->value;
        const Array& uv = n.parents[3]->value;
        const double dv = n.parents[4]->value(0);
        const Array& xs = n.saved;

        Array& ga = n.parents[0]->ensure_grad();
        Array& gb = n.parents[1]->ensure_grad();
        Array& gc = n.parents[2]->ensure_grad();
        Array& gu = n.parents[3]->ensure_grad();
        Array& gd = n.parents[4]->ensure_grad();

        Array lambda = Array::Zero(n_state);
        for (Index k = len - 1; k >= 0; --k) {
          const double gy = n.grad(k);
          gd(0) += gy * uv(k);
          double gu_k = gy * dv;
          for (Index i = 0; i < n_state; ++i) {
            const Index e = k * n_state + i;
            lambda(i) += gy * cv(e);
            const double prev = k == 0 ? 0.0 : xs((k - 1) * n_state + i);
            ga(e) += lambda(i) * prev;
            gb(e) += lambda(i) * uv(k);
            gc(e) += gy * xs(e);
            gu_k += bv(e) * lambda(i);
            lambda(i) *= av(e);
          }
          gu(k) += gu_k;
        }
      },
      std::move(states));
}

namespace {

using ArrMat = Eigen::ArrayXXd;  // column-major working matrices (N, I)
using ConstColsMap = Eigen::Map<const ArrMat>;
using ColsMap = Eigen::Map<ArrMat>;
using ConstRowMap = Eigen::Map<const Eigen::Array<double, 1, Eigen::Dynamic>>;
using RowMap = Eigen::Map<Eigen::Array<double, 1, Eigen::Dynamic>>;
using ConstColMap = Eigen::Map<const Eigen::ArrayXd>;
using ColMap = Eigen::Map<Eigen::ArrayXd>;

struct ScanDims {
  Index batch, len, channels, states;
};

ScanDims check_selective(const Tensor& u, const Tensor& delta, const Tensor& a_diag,
                         const Tensor& b_seq, const Tensor& c_seq, const Tensor& d_skip) {
  if (u.rank() != 3) {
    throw LengthMismatch("selective_scan: u must be (B, L, I)");
  }
  ScanDims dims{u.dim(0), u.dim(1), u.dim(2), 0};
  check_same("selective_scan", u, delta);
  if (a_diag.rank() != 2 || a_diag.dim(0) != dims.channels) {
    throw LengthMismatch("selective_scan: a_diag must be (I, N)");
  }
  dims.states = a_diag.dim(1);
  const Shape seq_shape{dims.batch, dims.len, dims.states};
  if (b_seq.shape() != seq_shape || c_seq.shape() != seq_shape) {
    throw LengthMismatch("selective_scan: b_seq/c_seq must be (B, L, N)");
  }
  if (d_skip.rank() != 1 || d_skip.dim(0) != dims.channels) {
    throw LengthMismatch("selective_scan: d_skip must have length I");
  }
  return dims;
}

}  // namespace

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& a_diag,
                      const Tensor& b_seq, const Tensor& c_seq, const Tensor& d_skip) {
  const auto [nb, len, ni, ns] = check_selective(u, delta, a_diag, b_seq, c_seq, d_skip);
  const Index plane = ns * ni;

  Array out(nb * len * ni);
  Array states(nb * len * plane);

  // a viewed column-major as (N, I): entry (n, i) is row-major A[i][n].
  ConstColsMap a_mat(a_diag.value().data(), ns, ni);
  ConstRowMap d_row(d_skip.value().data(), ni);

  ArrMat x(ns, ni), d_a(ns, ni), abar(ns, ni), bbar(ns, ni);
  for (Index b = 0; b < nb; ++b) {
    x.setZero();
    for (Index t = 0; t < len; ++t) {
      const Index row = b * len + t;
      ConstRowMap u_row(u.value().data() + row * ni, ni);
      ConstRowMap dt_row(delta.value().data() + row * ni, ni);
      ConstColMap b_col(b_seq.value().data() + row * ns, ns);
      ConstColMap c_col(c_seq.value().data() + row * ns, ns);

      d_a = a_mat.rowwise() * dt_row;
      abar = d_a.exp();
      bbar = (d_a.abs() < kZohSeriesEps)
                 .select((b_col.matrix() * dt_row.matrix()).array(),
                         ((abar - 1.0) / a_mat).colwise() * b_col);
      x = abar * x + bbar.rowwise() * u_row;
      ColsMap(states.data() + row * plane, ns, ni) = x;

      RowMap(out.data() + row * ni, ni) =
          (c_col.matrix().transpose() * x.matrix()).array() + d_row * u_row;
    }
  }

  return ad::record(
      "selective_scan", {nb, len, ni}, std::move(out),
      {u, delta, a_diag, b_seq, c_seq, d_skip},
      [nb, len, ni, ns, plane](Node& n) {
        const Array& uv = n.parents[0]->value;
        const Array& dtv = n.parents[1]->value;
        const Array& av = n.parents[2]->value;
        const Array& bv = n.parents[3]->value;
        const Array& cv = n.parents[4]->value;
        const Array& xs = n.saved;

        Array& gu = n.parents[0]->ensure_grad();
        Array& gdt = n.parents[1]->ensure_grad();
        Array& ga = n.parents[2]->ensure_grad();
        Array& gb = n.parents[3]->ensure_grad();
        Array& gc = n.parents[4]->ensure_grad();
        Array& gd = n.parents[5]->ensure_grad();

        ConstColsMap a_mat(av.data(), ns, ni);
        ColsMap ga_mat(ga.data(), ns, ni);
        ConstRowMap d_row(n.parents[5]->value.data(), ni);
        RowMap gd_row(gd.data(), ni);

        const ArrMat zero = ArrMat::Zero(ns, ni);
        ArrMat lambda(ns, ni), d_a(ns, ni), abar(ns, ni), bbar(ns, ni);
        ArrMat gabar(ns, ni), gbbar(ns, ni), b_over_a(ns, ni), gd_a(ns, ni);

        for (Index b = 0; b < nb; ++b) {
          lambda.setZero();
          for (Index t = len - 1; t >= 0; --t) {
            const Index row = b * len + t;
            ConstRowMap u_row(uv.data() + row * ni, ni);
            ConstRowMap dt_row(dtv.data() + row * ni, ni);
            ConstColMap b_col(bv.data() + row * ns, ns);
            ConstColMap c_col(cv.data() + row * ns, ns);
            ConstRowMap gy_row(n.grad.data() + row * ni, ni);
            ConstColsMap x_t(xs.data() + row * plane, ns, ni);

            RowMap gu_row(gu.data() + row * ni, ni);
            RowMap gdt_row(gdt.data() + row * ni, ni);
            ColMap gb_col(gb.data() + row * ns, ns);
            ColMap gc_col(gc.data() + row * ns, ns);

            // Redo the ZOH pieces for this step; cheaper than keeping them.
            d_a = a_mat.rowwise() * dt_row;
            abar = d_a.exp();
            const auto series = d_a.abs() < kZohSeriesEps;
            bbar = series.select((b_col.matrix() * dt_row.matrix()).array(),
                                 ((abar - 1.0) / a_mat).colwise() * b_col);

            gd_row += gy_row * u_row;
            gu_row += gy_row * d_row;
            lambda += (c_col.matrix() * gy_row.matrix()).array();
            gc_col += (x_t.matrix() * gy_row.matrix().transpose()).array();

            if (t > 0) {
              ConstColsMap x_prev(xs.data() + (row - 1) * plane, ns, ni);
              gabar = lambda * x_prev;
            } else {
              gabar.setZero();
            }
            gbbar = lambda.rowwise() * u_row;
            gu_row += (bbar * lambda).colwise().sum();

            b_over_a = series.select(zero, (a_mat.inverse()).colwise() * b_col);
            gd_a = (gabar + gbbar * b_over_a) * abar;
            gdt_row += (gd_a * a_mat).colwise().sum() +
                       (series.select(gbbar, zero).colwise() * b_col).colwise().sum();
            ga_mat += gd_a.rowwise() * dt_row -
                      series.select(zero, gbbar * (abar - 1.0) * b_over_a / a_mat);
            gb_col += series.select(gbbar.rowwise() * dt_row,
                                    gbbar * (abar - 1.0) / a_mat)
                          .rowwise()
                          .sum();

            lambda *= abar;
          }
        }
      },
      std::move(states));
}

SelectiveSeqs selective_params(const Tensor& u, const SsmParams& p) {
  SelectiveSeqs out;
  out.b = ad::matmul(u, p.b_proj);
  out.c = ad::matmul(u, p.c_proj);
  out.delta = ad::softplus(ad::add_rowvec(ad::matmul(u, p.dt_proj), p.dt_bias));
  return out;
}

Tensor mamba_block_forward(const Tensor& x, const MambaBlockParams& p) {
  const Tensor a_neg = ad::scale(ad::exp(p.ssm.a_log), -1.0);

  if (p.bare) {
    const auto seqs = selective_params(x, p.ssm);
    return selective_scan(x, seqs.delta, a_neg, seqs.b, seqs.c, p.ssm.d_skip);
  }

  const Index inner = p.in_proj.dim(1) / 2;
  const Tensor both = ad::matmul(x, p.in_proj);
  const Tensor stream = ad::slice_lastdim(both, 0, inner);
  const Tensor gate = ad::slice_lastdim(both, inner, inner);

  const Tensor u = ad::silu(ad::conv1d_causal(stream, p.conv_w, p.conv_b));
  const auto seqs = selective_params(u, p.ssm);
  const Tensor y = selective_scan(u, seqs.delta, a_neg, seqs.b, seqs.c, p.ssm.d_skip);
  return ad::matmul(ad::mul(y, ad::silu(gate)), p.out_proj);
}

}  // namespace cm::ssm
