#include "pcix/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "pcix/errors.hpp"
#include "pcix/inference.hpp"
#include "pcix/parallel.hpp"
#include "pcix/rng.hpp"
#include "pcix/stats.hpp"

namespace pcix {

namespace {

// ---- quadrature over the truncated-normal U ----

struct UQuad {
  // 64 Gauss-Legendre nodes per half-interval, split at the U_b threshold
  std::vector<double> u, wt;  // weights sum to 1
  std::vector<int> ub;
};

void gauss_legendre(int k, std::vector<double>& x, std::vector<double>& w) {
  x.resize(k);
  w.resize(k);
  for (int i = 0; i < k; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (k + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < k; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
      }
      const double dp = k * (t * p0 - p1) / (t * t - 1.0);
      const double step = p0 / dp;
      t -= step;
      if (std::fabs(step) < 1e-15) break;
    }
    double p0 = 1.0, p1 = 0.0;
    for (int j = 0; j < k; ++j) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
    }
    const double dp = k * (t * p0 - p1) / (t * t - 1.0);
    x[i] = t;
    w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
}

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

const UQuad& u_quadrature() {
  static const UQuad q = [] {
    UQuad out;
    std::vector<double> gx, gw;
    gauss_legendre(64, gx, gw);
    const double zc = normal_cdf(0.5) - normal_cdf(-0.5);
    for (int half = 0; half < 2; ++half) {
      const double lo = half == 0 ? 0.0 : 0.5;
      const double hi = half == 0 ? 0.5 : 1.0;
      for (int i = 0; i < 64; ++i) {
        const double u = 0.5 * (hi - lo) * gx[i] + 0.5 * (hi + lo);
        out.u.push_back(u);
        out.wt.push_back(0.5 * (hi - lo) * gw[i] * norm_pdf(u - 0.5) / zc);
        out.ub.push_back(half);
      }
    }
    return out;
  }();
  return q;
}

struct XCell {
  int x1, x2;
  double p;
};

const std::array<XCell, 4>& x_cells() {
  static const std::array<XCell, 4> c = {XCell{0, 0, 0.3 * 0.5},
                                         XCell{0, 1, 0.3 * 0.5},
                                         XCell{1, 0, 0.7 * 0.5},
                                         XCell{1, 1, 0.7 * 0.5}};
  return c;
}

// ---- model pieces (U_b drives W, R, Z; continuous U drives event times) ----

double p_r1(const DgpConfig& c, int ub, int x1, int x2) {
  return 1.0 /
         (1.0 + std::exp(-1.2 + c.cal.d_r + 2.0 * ub + 0.3 * x1 + 0.2 * x2));
}
double p_w1(const DgpConfig& c, int ub, int x1, int x2) {
  return std::min(
      1.0, std::exp(c.cell.bw0 + c.cal.d_w + c.cell.bw * ub + 0.2 * x1 + 0.5 * x2));
}
double p_z1(const DgpConfig& c, int ub, int x1, int x2) {
  return 1.0 / (1.0 + std::exp(c.cell.bz0 + c.cal.d_z + c.cell.bz * ub +
                               0.5 * x1 - 0.2 * x2));
}
double placebo_rate(const DgpConfig& c, double u, int x1, int x2) {
  return c.cal.c_surv * std::exp(-1.0 + 0.8 * x1 + 0.3 * x2 - 2.0 * u) / 2000.0;
}
double active_rate(double u, int x1, int x2) {
  return std::exp(-1.0 + 0.5 * x1 - 0.2 * x2 - 1.8 * u) / 6000.0;
}
double censor_rate_ext(const DgpConfig& c, int z, int x1, int x2) {
  return std::exp(-2.5 + 0.2 * z + 0.2 * x1 - 0.1 * x2) / (30.0 * c.censor_scale);
}
double censor_rate_prim(const DgpConfig& c, int z, int x1, int x2) {
  return std::exp(-2.5 + 0.2 * z + 0.3 * x1 + 0.1 * x2) / (50.0 * c.censor_scale);
}

double bisect(double lo, double hi, const std::function<double(double)>& f) {
  double flo = f(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

DgpCell dgp_cell(const std::string& name) {
  if (name == "medium,medium") return {name, -4.0, 3.0, -1.2, 1.0};
  if (name == "medium,high") return {name, -4.0, 3.0, -1.2, 2.0};
  if (name == "high,medium") return {name, -4.7, 4.0, -1.2, 1.0};
  if (name == "high,high") return {name, -4.7, 4.0, -1.2, 2.0};
  throw Error("unknown proxy-strength cell '" + name +
              "' (use medium,medium | medium,high | high,medium | high,high)");
}

double dgp_marginal_r1(const DgpConfig& cfg) {
  double tot = 0.0;
  for (const auto& xc : x_cells())
    for (int ub = 0; ub < 2; ++ub)
      tot += xc.p * 0.5 * p_r1(cfg, ub, xc.x1, xc.x2);
  return tot;
}

double dgp_marginal_w1(const DgpConfig& cfg) {
  double tot = 0.0;
  for (const auto& xc : x_cells())
    for (int ub = 0; ub < 2; ++ub)
      tot += xc.p * 0.5 * p_w1(cfg, ub, xc.x1, xc.x2);
  return tot;
}

double dgp_marginal_z1(const DgpConfig& cfg) {
  double tot = 0.0;
  for (const auto& xc : x_cells())
    for (int ub = 0; ub < 2; ++ub)
      tot += xc.p * 0.5 * p_z1(cfg, ub, xc.x1, xc.x2);
  return tot;
}

double dgp_truth_incidence(const DgpConfig& cfg) {
  const UQuad& q = u_quadrature();
  double num = 0.0, den = 0.0;
  for (const auto& xc : x_cells()) {
    for (std::size_t i = 0; i < q.u.size(); ++i) {
      const double w0 =
          q.wt[i] * xc.p * (1.0 - p_r1(cfg, q.ub[i], xc.x1, xc.x2));
      num += w0 * (1.0 - std::exp(-placebo_rate(cfg, q.u[i], xc.x1, xc.x2) *
                                  cfg.horizon));
      den += w0;
    }
  }
  return num / den;
}

namespace {

double dgp_arm_incidence(const DgpConfig& cfg) {
  const UQuad& q = u_quadrature();
  double num = 0.0, den = 0.0;
  for (const auto& xc : x_cells()) {
    for (std::size_t i = 0; i < q.u.size(); ++i) {
      const double w0 =
          q.wt[i] * xc.p * (1.0 - p_r1(cfg, q.ub[i], xc.x1, xc.x2));
      num += w0 * (1.0 - std::exp(-active_rate(q.u[i], xc.x1, xc.x2) *
                                  cfg.horizon));
      den += w0;
    }
  }
  return num / den;
}

}  // namespace

double dgp_mean_w(const DgpConfig& cfg, int r, int z, int x1, int x2) {
  // P(U_b | R, Z, X) by Bayes over the two U_b cells
  double post[2], tot = 0.0;
  for (int ub = 0; ub < 2; ++ub) {
    const double pr = p_r1(cfg, ub, x1, x2);
    const double pz = p_z1(cfg, ub, x1, x2);
    post[ub] = 0.5 * (r == 1 ? pr : 1.0 - pr) * (z == 1 ? pz : 1.0 - pz);
    tot += post[ub];
  }
  double mean = 0.0;
  for (int ub = 0; ub < 2; ++ub)
    mean += post[ub] / tot * p_w1(cfg, ub, x1, x2);
  return mean;
}

DgpConfig make_dgp_config(const DgpCell& cell, long n, std::uint64_t seed,
                          double censor_scale) {
  DgpConfig cfg;
  cfg.cell = cell;
  cfg.n = n;
  cfg.seed = seed;
  cfg.censor_scale = censor_scale;

  cfg.cal.d_r = bisect(-4, 4, [&](double d) {
    DgpConfig t = cfg;
    t.cal.d_r = d;
    return dgp_marginal_r1(t) - 0.33;
  });
  cfg.cal.d_w = bisect(-4, 4, [&](double d) {
    DgpConfig t = cfg;
    t.cal.d_w = d;
    return dgp_marginal_w1(t) - 0.15;
  });
  cfg.cal.d_z = bisect(-4, 4, [&](double d) {
    DgpConfig t = cfg;
    t.cal.d_z = d;
    return dgp_marginal_z1(t) - 0.50;
  });
  cfg.cal.c_surv = bisect(1e-3, 40, [&](double c) {
    DgpConfig t = cfg;
    t.cal.c_surv = c;
    return dgp_truth_incidence(t) - 0.035;
  });
  cfg.cal.truth = dgp_truth_incidence(cfg);
  cfg.cal.arm_truth = dgp_arm_incidence(cfg);
  return cfg;
}

namespace {

struct Draw {
  int x1, x2, w, r, z;
  double u, t0, t1, ce, cp;
};

// Fixed per-record draw order; streams are keyed by (seed, block) so any
// worker count regenerates identical data.
Draw draw_record(const DgpConfig& cfg, Prng& rng) {
  Draw d;
  d.x1 = rng.bernoulli(0.7);
  d.x2 = rng.bernoulli(0.5);
  d.u = rng.truncated_normal(0.5, 1.0, 0.0, 1.0);
  const int ub = d.u > 0.5;
  d.w = rng.bernoulli(p_w1(cfg, ub, d.x1, d.x2));
  d.r = rng.bernoulli(p_r1(cfg, ub, d.x1, d.x2));
  d.z = rng.bernoulli(p_z1(cfg, ub, d.x1, d.x2));
  d.t0 = rng.exponential(placebo_rate(cfg, d.u, d.x1, d.x2));
  d.t1 = rng.exponential(active_rate(d.u, d.x1, d.x2));
  d.ce = rng.exponential(censor_rate_ext(cfg, d.z, d.x1, d.x2));
  d.cp = rng.exponential(censor_rate_prim(cfg, d.z, d.x1, d.x2));
  return d;
}

constexpr long kGenBlock = 8192;

}  // namespace

StudyDataset generate(const DgpConfig& cfg) {
  StudyDataset ds;
  ds.schema.covariate_names = {"x1", "x2"};
  ds.schema.has_nce = true;
  ds.schema.has_nco = true;
  ds.schema.latent_names = {"u", "t0", "t1", "cp"};
  std::ostringstream prov;
  prov << "dgp cell=" << cfg.cell.name << " n=" << cfg.n << " seed=" << cfg.seed;
  ds.provenance = prov.str();
  ds.records.resize(static_cast<std::size_t>(cfg.n));

  const long nblocks = (cfg.n + kGenBlock - 1) / kGenBlock;
  const std::uint64_t label = hash_label("generate");
#ifdef _OPENMP
  const int nt = workers() > 0 ? workers() : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
#endif
  for (long b = 0; b < nblocks; ++b) {
    Prng rng(derive_seed(cfg.seed, {label, static_cast<std::uint64_t>(b)}));
    const long lo = b * kGenBlock;
    const long hi = std::min(cfg.n, lo + kGenBlock);
    for (long i = lo; i < hi; ++i) {
      const Draw d = draw_record(cfg, rng);
      SubjectRecord rec;
      rec.study = static_cast<std::uint8_t>(d.r);
      rec.arm = d.r == 1 ? 0 : 1;
      if (d.r == 1) {
        rec.time = std::min(d.t0, d.ce);
        rec.event = d.t0 <= d.ce;
      } else {
        rec.time = std::min(d.t1, d.cp);
        rec.event = d.t1 <= d.cp;
      }
      rec.covariates = {double(d.x1), double(d.x2)};
      rec.nce = static_cast<std::uint8_t>(d.z);
      rec.nco = static_cast<std::uint8_t>(d.w);
      rec.latent = {d.u, d.t0, d.t1, d.cp};
      ds.records[static_cast<std::size_t>(i)] = std::move(rec);
    }
  }
  return ds;
}

DataView null_arm_view(const DataView& v) {
  DataView out = v;
  const Eigen::VectorXd& t0 = v.latent.at("t0");
  const Eigen::VectorXd& cp = v.latent.at("cp");
  for (Eigen::Index i = 0; i < v.n(); ++i) {
    if (v.study[i] != 0.0) continue;
    out.time[i] = std::min(t0[i], cp[i]);
    out.event[i] = t0[i] <= cp[i] ? 1.0 : 0.0;
  }
  return out;
}

DgpMarginals stream_marginals(const DgpConfig& cfg, long n) {
  struct Acc {
    double r1 = 0, w1 = 0, z1 = 0, ev0 = 0, ev1 = 0, n0 = 0;
  };
  const long nblocks = (n + kGenBlock - 1) / kGenBlock;
  const std::uint64_t label = hash_label("generate");
  std::vector<Acc> parts(static_cast<std::size_t>(nblocks));
#ifdef _OPENMP
  const int nt = workers() > 0 ? workers() : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
#endif
  for (long b = 0; b < nblocks; ++b) {
    Prng rng(derive_seed(cfg.seed, {label, static_cast<std::uint64_t>(b)}));
    Acc a;
    const long lo = b * kGenBlock;
    const long hi = std::min(n, lo + kGenBlock);
    for (long i = lo; i < hi; ++i) {
      const Draw d = draw_record(cfg, rng);
      a.r1 += d.r;
      a.w1 += d.w;
      a.z1 += d.z;
      if (d.r == 0) {
        a.n0 += 1;
        a.ev0 += d.t0 <= cfg.horizon;
        a.ev1 += d.t1 <= cfg.horizon;
      }
    }
    parts[static_cast<std::size_t>(b)] = a;
  }
  Acc tot;
  for (const Acc& a : parts) {
    tot.r1 += a.r1;
    tot.w1 += a.w1;
    tot.z1 += a.z1;
    tot.ev0 += a.ev0;
    tot.ev1 += a.ev1;
    tot.n0 += a.n0;
  }
  DgpMarginals m;
  m.n = n;
  m.p_r1 = tot.r1 / n;
  m.p_w1 = tot.w1 / n;
  m.p_z1 = tot.z1 / n;
  m.incidence_r0 = tot.ev0 / tot.n0;
  m.arm_incidence_r0 = tot.ev1 / tot.n0;
  return m;
}

std::string calibration_check(const DgpConfig& cfg, long n, double band) {
  const DgpMarginals m = stream_marginals(cfg, n);
  std::ostringstream out;
  auto check = [&](const char* what, double got, double want, double tol) {
    if (std::fabs(got - want) > tol) {
      out << "CALIBRATION WARNING: " << what << " = " << got << ", expected "
          << want << " +/- " << tol << "\n";
    }
  };
  check("P(R=1)", m.p_r1, 0.33, band);
  check("P(W=1)", m.p_w1, 0.15, band);
  check("P(Z=1)", m.p_z1, 0.50, band);
  check("P(T0<=t|R=0)", m.incidence_r0, cfg.cal.truth, std::max(0.002, band / 5));
  const std::string s = out.str();
  if (!s.empty()) std::cerr << s;
  return s;
}

namespace {

struct RepRow {
  // per method: estimate state
  struct Cell {
    double theta = 0, se = 0, p = 0;
    bool valid = false, failed = false;
    int reject_alt = -1, reject_null = -1;  // -1 = test unavailable
  };
  std::vector<Cell> cells;
};

}  // namespace

SimReport run_scenario(const SimScenario& sc, std::uint64_t seed) {
  const DgpCell cell = dgp_cell(sc.cell);
  const DgpConfig base =
      make_dgp_config(cell, sc.n, seed, sc.censor_scale);

  SimReport report;
  report.scenario = sc;
  report.seed = seed;
  report.truth = base.cal.truth;
  const double theta_truth = cloglog(base.cal.truth);

  const std::uint64_t cell_id = hash_label(sc.cell);
  std::vector<RepRow> rows(static_cast<std::size_t>(sc.replicates));

#ifdef _OPENMP
  const int nt = workers() > 0 ? workers() : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
#endif
  for (int r = 0; r < sc.replicates; ++r) {
    DgpConfig cfg = base;
    cfg.seed = derive_seed(seed, {cell_id, static_cast<std::uint64_t>(sc.n),
                                  static_cast<std::uint64_t>(r)});
    const StudyDataset ds = generate(cfg);
    const DataView v = make_view(ds);
    const DataView vnull = null_arm_view(v);

    RepRow row;
    row.cells.resize(sc.methods.size());
    for (std::size_t mi = 0; mi < sc.methods.size(); ++mi) {
      const std::string& method = sc.methods[mi];
      auto& out = row.cells[mi];
      try {
        StackedEstimator est = build_placebo_stack(v, sc.horizon, method);
        IncidenceEstimate e = finish_estimate(est);
        out.p = e.estimate;
        out.valid = e.valid;
        if (e.valid) {
          out.theta = e.theta;
          out.se = e.se_theta;
        }
      } catch (const std::exception&) {
        out.failed = true;
      }
      if (sc.efficacy && !out.failed) {
        EfficacyOptions eo;
        eo.method = method;
        eo.t = sc.horizon;
        try {
          out.reject_alt = efficacy_test(v, 1, eo).pvalue < 0.05 ? 1 : 0;
        } catch (const std::exception&) {
        }
        try {
          out.reject_null = efficacy_test(vnull, 1, eo).pvalue < 0.05 ? 1 : 0;
        } catch (const std::exception&) {
        }
      }
    }
    rows[static_cast<std::size_t>(r)] = std::move(row);
  }

  for (std::size_t mi = 0; mi < sc.methods.size(); ++mi) {
    SimMetrics m;
    m.method = sc.methods[mi];
    m.replicates = sc.replicates;
    std::vector<double> thetas, ses;
    int covered = 0;
    int invalid = 0;
    for (const auto& row : rows) {
      const auto& c = row.cells[mi];
      if (c.failed) {
        ++m.failed;
        continue;
      }
      if (!c.valid) {
        ++invalid;
        continue;
      }
      thetas.push_back(c.theta);
      ses.push_back(c.se);
      const double z = normal_quantile(0.975);
      if (std::fabs(c.theta - theta_truth) <= z * c.se) ++covered;
      if (c.reject_alt >= 0) {
        ++m.power_tests;
        m.power += c.reject_alt;
      }
      if (c.reject_null >= 0) {
        ++m.type1_tests;
        m.type1 += c.reject_null;
      }
    }
    m.valid = static_cast<int>(thetas.size());
    m.prop_excluded =
        static_cast<double>(invalid) / static_cast<double>(sc.replicates);
    if (!thetas.empty()) {
      double mean = 0;
      for (double t : thetas) mean += t;
      mean /= thetas.size();
      m.mean_theta = mean;
      m.est_incidence = inv_cloglog(mean);
      if (thetas.size() >= 2) {
        double ss = 0;
        for (double t : thetas) ss += (t - mean) * (t - mean);
        m.sd_theta = std::sqrt(ss / (thetas.size() - 1.0));
        m.sd_defined = true;
      }
      std::sort(ses.begin(), ses.end());
      m.med_se = ses[ses.size() / 2];
      m.coverage = static_cast<double>(covered) / thetas.size();
    }
    if (m.power_tests > 0) m.power /= m.power_tests;
    if (m.type1_tests > 0) m.type1 /= m.type1_tests;
    report.metrics.push_back(m);
  }
  return report;
}

namespace {

std::pair<std::string, std::string> method_display(const std::string& m) {
  if (m == "oracle") return {"Oracle", "Adjust for X,U"};
  if (m == "naive-x") return {"Naive", "Adjust for X"};
  if (m == "naive-xzw") return {"Naive", "Adjust for X,Z,W"};
  if (m == "ob") return {"IPCW", "Outcome bridge"};
  if (m == "tb") return {"IPCW", "Propensity bridge"};
  if (m == "dr") return {"IPCW", "Doubly robust"};
  if (m == "ts1y") return {"Two-stage", "1-year data"};
  if (m == "tsall") return {"Two-stage", "All data"};
  return {m, "-"};
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string report_csv(const std::vector<SimReport>& reports) {
  std::ostringstream out;
  out << "factor2,n,method,specification,estimate,est_incidence,sd,med_se,"
         "coverage,power,type1_error,prop_ex,failed\n";
  for (const auto& rep : reports) {
    for (const auto& m : rep.metrics) {
      const auto [name, spec] = method_display(m.method);
      out << rep.scenario.cell << ',' << rep.scenario.n << ',' << name << ','
          << spec << ',' << fmt(m.mean_theta) << ',' << fmt(m.est_incidence)
          << ',' << (m.sd_defined ? fmt(m.sd_theta) : std::string()) << ','
          << fmt(m.med_se) << ',' << fmt(m.coverage) << ','
          << (m.power_tests > 0 ? fmt(m.power) : std::string()) << ','
          << (m.type1_tests > 0 ? fmt(m.type1) : std::string()) << ','
          << ((m.method == "ob" || m.method == "tb" || m.method == "dr")
                  ? fmt(m.prop_excluded)
                  : std::string("-"))
          << ',' << m.failed << '\n';
    }
  }
  return out.str();
}

std::string report_metadata(const std::vector<SimReport>& reports) {
  nlohmann::json meta = nlohmann::json::array();
  for (const auto& rep : reports) {
    nlohmann::json j;
    j["cell"] = rep.scenario.cell;
    j["n"] = rep.scenario.n;
    j["replicates"] = rep.scenario.replicates;
    j["methods"] = rep.scenario.methods;
    j["censor_scale"] = rep.scenario.censor_scale;
    j["horizon"] = rep.scenario.horizon;
    j["seed"] = rep.seed;
    j["truth"] = rep.truth;
    j["arm_null"] = "placebo law with primary censoring";
    j["arm_alternative"] = "active law with primary censoring";
    meta.push_back(j);
  }
  return meta.dump(2) + "\n";
}

}  // namespace pcix
