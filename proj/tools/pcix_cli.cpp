// Command-line front end: analyze | simulate | diagnose | summarize.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pcix/bridge.hpp"
#include "pcix/dataset.hpp"
#include "pcix/errors.hpp"
#include "pcix/inference.hpp"
#include "pcix/naive.hpp"
#include "pcix/parallel.hpp"
#include "pcix/rng.hpp"
#include "pcix/sensitivity.hpp"
#include "pcix/simulate.hpp"
#include "pcix/survival.hpp"
#include "pcix/twostage.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DataArgs {
  std::string input;
  std::string config;
  double t = 365.0;
  double t0 = 365.0;
  std::string methods = "ob,tb,dr,ts1y";
  double level = 0.95;
  int bootstrap_reps = 0;
  std::uint64_t seed = 1;
  int workers = 0;
  std::string q_moment = "external";
  std::string censor_model = "exponential";
  std::string out_dir = ".";
  bool drop_zero = false;
  bool skip_efficacy = false;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw pcix::DataError("cannot open config '" + path + "'");
  json j;
  in >> j;
  return j;
}

pcix::ColumnMapping mapping_from(const json& cfg) {
  pcix::ColumnMapping m;
  if (!cfg.contains("mapping")) {
    // default header: R,A,T,delta,x1,x2,Z,W (the simulated-data layout)
    m.covariates = {{"x1", false}, {"x2", false}};
    m.nce = "Z";
    m.nco = "W";
    return m;
  }
  const json& j = cfg["mapping"];
  m.study = j.value("study", "R");
  m.arm = j.value("arm", "A");
  m.time = j.value("time", "T");
  m.event = j.value("event", "delta");
  if (j.contains("covariates")) {
    for (const auto& c : j["covariates"]) {
      if (c.is_string())
        m.covariates.push_back({c.get<std::string>(), false});
      else
        m.covariates.push_back(
            {c.at("name").get<std::string>(), c.value("categorical", false)});
    }
  }
  m.nce = j.value("nce", "");
  m.nco = j.value("nco", "");
  if (j.contains("latent"))
    m.latent = j["latent"].get<std::vector<std::string>>();
  return m;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

json resolved_config(const DataArgs& a, const json& file_cfg) {
  json j = file_cfg;
  j["input"] = a.input;
  j["t"] = a.t;
  j["t0"] = a.t0;
  j["methods"] = a.methods;
  j["level"] = a.level;
  j["bootstrap"] = a.bootstrap_reps;
  j["seed"] = a.seed;
  j["q_moment"] = a.q_moment;
  j["censor_model"] = a.censor_model;
  j["drop_zero_followup"] = a.drop_zero;
  return j;
}

pcix::StudyDataset load_analysis_dataset(const DataArgs& a, const json& cfg,
                                         json& diag) {
  const pcix::ColumnMapping mapping = mapping_from(cfg);
  pcix::StudyDataset ds = pcix::load_csv(a.input, mapping);
  diag["rows_loaded"] = ds.records.size();
  diag["rows_rejected"] = ds.rejects.size();
  if (!ds.rejects.empty()) {
    json rj = json::array();
    for (const auto& r : ds.rejects)
      rj.push_back({{"row", r.row}, {"reason", r.reason}});
    diag["rejects"] = rj;
  }
  if (a.drop_zero || cfg.value("drop_zero_followup", false))
    ds = pcix::drop_zero_followup(ds);

  std::vector<std::string> cc;
  if (cfg.contains("complete_case")) {
    cc = cfg["complete_case"].get<std::vector<std::string>>();
  } else {
    cc = ds.schema.covariate_names;
    if (ds.schema.has_nco) cc.push_back("nco");
    if (ds.schema.has_nce) cc.push_back("nce");
  }
  ds = pcix::complete_case(ds, cc);
  diag["analysis_rows"] = ds.records.size();
  diag["notes"] = ds.notes;
  return ds;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw pcix::DataError("cannot write '" + p.string() + "'");
  out << content;
}

int run_analyze(const DataArgs& a) {
  const json cfg = load_config(a.config);
  json diag;
  const pcix::StudyDataset ds = load_analysis_dataset(a, cfg, diag);
  const pcix::DataView v = pcix::make_view(ds);

  pcix::IpcwOptions ipcw;
  ipcw.level = a.level;
  ipcw.q_moment = a.q_moment == "alldata" ? pcix::QMomentForm::AllData
                                          : pcix::QMomentForm::External;
  ipcw.censor_model = a.censor_model == "cox"
                          ? pcix::CensorModelKind::CoxBreslow
                          : pcix::CensorModelKind::Exponential;
  if (a.bootstrap_reps > 0) ipcw.bootstrap_reps = a.bootstrap_reps;
  ipcw.bootstrap_seed = a.seed;
  pcix::TwoStageOptions ts;
  ts.level = a.level;

  const auto methods = split_list(a.methods);
  json estimates = json::array();
  json efficacy = json::array();
  std::ostringstream est_csv;
  est_csv << "method,t,estimate,cloglog,se_cloglog,ci_lo,ci_hi,valid,n0,n1\n";
  int failures = 0;

  for (const auto& method : methods) {
    try {
      pcix::IncidenceEstimate e;
      if (method == "ob")
        e = pcix::estimate_outcome_bridge(v, a.t, ipcw);
      else if (method == "tb")
        e = pcix::estimate_treatment_bridge(v, a.t, ipcw);
      else if (method == "dr")
        e = pcix::estimate_doubly_robust(v, a.t, ipcw);
      else if (method == "ts1y") {
        pcix::TwoStageOptions o = ts;
        o.truncate_at = a.t0;
        e = pcix::estimate_twostage(v, a.t, o);
      } else if (method == "tsall") {
        e = pcix::estimate_twostage(v, a.t, ts);
      } else if (method == "naive-x") {
        e = pcix::estimate_naive(v, a.t, pcix::NaiveAdjust::XOnly, a.level);
      } else if (method == "naive-xzw") {
        e = pcix::estimate_naive(v, a.t, pcix::NaiveAdjust::XZW, a.level);
      } else if (method == "km") {
        // observed incidence of the external placebo arm
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < v.n(); ++i)
          if (v.study[i] == 1.0) idx.push_back(i);
        Eigen::VectorXd tt(idx.size()), ee(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
          tt[static_cast<Eigen::Index>(k)] = v.time[idx[k]];
          ee[static_cast<Eigen::Index>(k)] = v.event[idx[k]];
        }
        e = pcix::km_incidence(tt, ee, a.t, a.level);
      } else {
        throw pcix::Error("unknown method '" + method + "'");
      }
      estimates.push_back(e.to_json());
      est_csv << e.method << ',' << e.t << ',' << e.estimate << ','
              << (e.valid ? std::to_string(e.theta) : "") << ','
              << (e.valid ? std::to_string(e.se_theta) : "") << ','
              << (e.valid ? std::to_string(e.ci_lo) : "") << ','
              << (e.valid ? std::to_string(e.ci_hi) : "") << ','
              << (e.valid ? "true" : "false") << ',' << e.n0 << ',' << e.n1
              << '\n';
    } catch (const std::exception& ex) {
      ++failures;
      estimates.push_back({{"method", method}, {"error", ex.what()}});
      json err = {{"where", "estimate:" + method}, {"what", ex.what()}};
      std::cerr << err.dump() << "\n";
    }
  }

  if (!a.skip_efficacy) {
    std::set<int> arms;
    for (Eigen::Index i = 0; i < v.n(); ++i)
      if (v.study[i] == 0.0 && v.arm[i] > 0)
        arms.insert(static_cast<int>(v.arm[i]));
    for (const auto& method : methods) {
      if (method == "km") continue;
      for (int arm : arms) {
        try {
          pcix::EfficacyOptions eo;
          eo.method = method;
          eo.t = a.t;
          eo.level = a.level;
          eo.ipcw = ipcw;
          eo.twostage = ts;
          if (method == "ts1y") eo.twostage.truncate_at = a.t0;
          efficacy.push_back(pcix::efficacy_test(v, arm, eo).to_json());
        } catch (const std::exception& ex) {
          efficacy.push_back(
              {{"method", method}, {"arm", arm}, {"error", ex.what()}});
        }
      }
    }
  }

  const json cfg_echo = resolved_config(a, cfg);
  json out;
  out["config"] = cfg_echo;
  out["estimates"] = estimates;
  out["efficacy"] = efficacy;
  out["diagnostics"] = diag;

  fs::create_directories(a.out_dir);
  write_file(fs::path(a.out_dir) / "analysis.json", out.dump(2) + "\n");
  std::ostringstream csv;
  csv << "# config " << cfg_echo.dump() << "\n" << est_csv.str();
  write_file(fs::path(a.out_dir) / "estimates.csv", csv.str());
  if (!efficacy.empty()) {
    std::ostringstream ec;
    ec << "# config " << cfg_echo.dump() << "\n";
    ec << "arm,method,rel_eff,abs_eff,stat,pvalue\n";
    for (const auto& e : efficacy) {
      if (e.contains("error")) continue;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%d,%s,%.3f,%.3f,%.3f,%.4g\n",
                    e["arm"].get<int>(), e["method"].get<std::string>().c_str(),
                    e["rel_eff"].get<double>(), e["abs_eff"].get<double>(),
                    e["stat"].get<double>(), e["pvalue"].get<double>());
      ec << buf;
    }
    write_file(fs::path(a.out_dir) / "efficacy.csv", ec.str());
  }
  std::cout << out["estimates"].dump(2) << "\n";
  if (failures == static_cast<int>(methods.size())) return 3;
  return 0;
}

int run_simulate(const DataArgs& a, const std::vector<std::string>& cells,
                 long n, int replicates, double censor_scale, long check_n,
                 const std::string& dump_data) {
  std::vector<pcix::SimScenario> scenarios;
  const json cfg = load_config(a.config);
  if (cfg.contains("scenarios")) {
    for (const auto& s : cfg["scenarios"]) {
      pcix::SimScenario sc;
      sc.cell = s.value("cell", "medium,medium");
      sc.n = s.value("n", 6500L);
      sc.replicates = s.value("replicates", replicates);
      sc.censor_scale = s.value("censor_scale", censor_scale);
      if (s.contains("methods"))
        sc.methods = s["methods"].get<std::vector<std::string>>();
      scenarios.push_back(sc);
    }
  } else {
    for (const auto& cell : cells) {
      pcix::SimScenario sc;
      sc.cell = cell;
      sc.n = n;
      sc.replicates = replicates;
      sc.censor_scale = censor_scale;
      if (a.methods != "default") sc.methods = split_list(a.methods);
      scenarios.push_back(sc);
    }
  }

  if (check_n > 0) {
    for (const auto& sc : scenarios) {
      const auto cfg2 = pcix::make_dgp_config(pcix::dgp_cell(sc.cell), sc.n,
                                              a.seed, sc.censor_scale);
      pcix::calibration_check(cfg2, check_n);
    }
  }

  if (!dump_data.empty() && !scenarios.empty()) {
    const auto& sc = scenarios.front();
    auto cfg2 = pcix::make_dgp_config(pcix::dgp_cell(sc.cell), sc.n, a.seed,
                                      sc.censor_scale);
    cfg2.seed = pcix::derive_seed(
        a.seed, {pcix::hash_label(sc.cell), static_cast<std::uint64_t>(sc.n),
                 std::uint64_t{0}});
    pcix::write_csv(pcix::generate(cfg2), dump_data);
  }

  std::vector<pcix::SimReport> reports;
  for (const auto& sc : scenarios)
    reports.push_back(pcix::run_scenario(sc, a.seed));

  fs::create_directories(a.out_dir);
  std::ostringstream csv;
  json cfg_echo;
  cfg_echo["seed"] = a.seed;
  cfg_echo["scenarios"] = json::array();
  for (const auto& sc : scenarios)
    cfg_echo["scenarios"].push_back({{"cell", sc.cell},
                                     {"n", sc.n},
                                     {"replicates", sc.replicates},
                                     {"censor_scale", sc.censor_scale},
                                     {"methods", sc.methods}});
  csv << "# config " << cfg_echo.dump() << "\n" << pcix::report_csv(reports);
  write_file(fs::path(a.out_dir) / "sim_report.csv", csv.str());
  write_file(fs::path(a.out_dir) / "sim_report.meta.json",
             pcix::report_metadata(reports));
  std::cout << pcix::report_csv(reports);
  return 0;
}

int run_diagnose(const DataArgs& a, const std::string& gammas,
                 const std::string& scope) {
  const json cfg = load_config(a.config);
  json diag;
  const pcix::StudyDataset ds = load_analysis_dataset(a, cfg, diag);
  const pcix::DataView v = pcix::make_view(ds);

  const pcix::ProxyStrength ps = pcix::proxy_strength(
      v, scope == "combined" ? pcix::ProxyScope::Combined
                             : pcix::ProxyScope::External);
  std::ostringstream out;
  out << "proxy_strength: OR(Z->W|X) = " << ps.odds_ratio
      << ", p = " << ps.pvalue << (ps.weak ? "  [WEAK PROXY]" : "") << "\n";

  std::vector<double> gs;
  for (const auto& g : split_list(gammas)) gs.push_back(std::stod(g));
  std::ostringstream gcsv;
  gcsv << "method,gamma,lower,upper,capped\n";
  if (!gs.empty()) {
    pcix::IpcwOptions ipcw;
    ipcw.q_moment = a.q_moment == "alldata" ? pcix::QMomentForm::AllData
                                            : pcix::QMomentForm::External;
    for (const auto& method : split_list(a.methods)) {
      pcix::IncidenceEstimate e;
      if (method == "ob")
        e = pcix::estimate_outcome_bridge(v, a.t, ipcw);
      else if (method == "tb")
        e = pcix::estimate_treatment_bridge(v, a.t, ipcw);
      else if (method == "dr")
        e = pcix::estimate_doubly_robust(v, a.t, ipcw);
      else
        continue;
      if (!e.valid) continue;
      for (const auto& b : pcix::gamma_bounds(e, gs)) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%s,%g,%.6g,%.6g,%d\n", method.c_str(),
                      b.gamma, b.lower, b.upper, b.capped ? 1 : 0);
        gcsv << buf;
      }
    }
  }
  fs::create_directories(a.out_dir);
  std::ostringstream pcsv;
  pcsv << "or,pvalue,weak,n\n"
       << ps.odds_ratio << ',' << ps.pvalue << ',' << (ps.weak ? 1 : 0) << ','
       << ps.n_used << "\n";
  write_file(fs::path(a.out_dir) / "proxy.csv", pcsv.str());
  write_file(fs::path(a.out_dir) / "gamma.csv", gcsv.str());
  std::cout << out.str() << gcsv.str();
  return 0;
}

int run_summarize(const DataArgs& a, const std::string& variables) {
  const json cfg = load_config(a.config);
  json diag;
  pcix::ColumnMapping mapping = mapping_from(cfg);
  pcix::StudyDataset ds = pcix::load_csv(a.input, mapping);
  std::vector<std::string> vars;
  if (!variables.empty()) {
    vars = split_list(variables);
  } else {
    vars = ds.schema.covariate_names;
    if (ds.schema.has_nce) vars.push_back("nce");
    if (ds.schema.has_nco) vars.push_back("nco");
  }
  const pcix::SummaryTable table = pcix::summarize(ds, vars);
  fs::create_directories(a.out_dir);
  write_file(fs::path(a.out_dir) / "summary.csv", table.to_csv());
  std::cout << table.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual placebo incidence from external controls"};
  app.require_subcommand(1);

  DataArgs a;
  std::vector<std::string> cells = {"medium,medium"};
  long sim_n = 6500;
  int replicates = 500;
  double censor_scale = 3.0;
  long check_n = 0;
  std::string dump_data;
  std::string gammas, scope = "external", variables;

  auto add_common = [&](CLI::App* sub, bool needs_input) {
    if (needs_input)
      sub->add_option("--input", a.input, "input CSV")->required();
    sub->add_option("--config", a.config, "JSON config file");
    sub->add_option("--t", a.t, "horizon in days");
    sub->add_option("--t0", a.t0, "two-stage truncation window in days");
    sub->add_option("--methods", a.methods, "comma list of estimators");
    sub->add_option("--level", a.level, "confidence level");
    sub->add_option("--bootstrap", a.bootstrap_reps, "bootstrap replicates");
    sub->add_option("--seed", a.seed, "master RNG seed");
    sub->add_option("--workers", a.workers, "worker threads (0 = all)");
    sub->add_option("--q-moment", a.q_moment, "external|alldata");
    sub->add_option("--censor-model", a.censor_model, "exponential|cox");
    sub->add_option("--out", a.out_dir, "output directory");
  };

  CLI::App* an = app.add_subcommand("analyze", "estimate counterfactual incidence");
  add_common(an, true);
  an->add_flag("--drop-zero-followup", a.drop_zero,
               "exclude records with time 0 and no event");
  an->add_flag("--skip-efficacy", a.skip_efficacy, "estimates only");

  CLI::App* si = app.add_subcommand("simulate", "factorial simulation sweeps");
  a.methods = "default";
  add_common(si, false);
  si->add_option("--cell", cells, "proxy cell, repeatable: --cell medium,medium");
  si->add_option("--n", sim_n, "sample size per replicate");
  si->add_option("--replicates", replicates, "replicates per scenario");
  si->add_option("--censor-scale", censor_scale, "censoring-mean scale");
  si->add_option("--check", check_n, "run a calibration check of this size");
  si->add_option("--dump-data", dump_data,
                 "write the first replicate's dataset to this CSV");

  CLI::App* di = app.add_subcommand("diagnose", "proxy strength and gamma bounds");
  add_common(di, true);
  di->add_option("--gamma", gammas, "comma list of gamma values");
  di->add_option("--scope", scope, "external|combined");

  CLI::App* su = app.add_subcommand("summarize", "baseline summary table");
  add_common(su, true);
  su->add_option("--variables", variables, "comma list of variables");

  CLI11_PARSE(app, argc, argv);
  pcix::set_workers(a.workers);

  try {
    if (an->parsed()) return run_analyze(a);
    if (si->parsed())
      return run_simulate(a, cells, sim_n, replicates, censor_scale, check_n,
                          dump_data);
    if (di->parsed()) return run_diagnose(a, gammas, scope);
    if (su->parsed()) return run_summarize(a, variables);
  } catch (const pcix::DataError& e) {
    std::cerr << nlohmann::json({{"error", "data"}, {"what", e.what()}}).dump()
              << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr
        << nlohmann::json({{"error", "estimation"}, {"what", e.what()}}).dump()
        << "\n";
    return 3;
  }
  return 0;
}
