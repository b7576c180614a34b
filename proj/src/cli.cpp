#include "seta/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "seta/errors.hpp"
#include "seta/metrics.hpp"

#ifndef SETA_DATA_DIR
#define SETA_DATA_DIR "data"
#endif

namespace seta {

namespace fs = std::filesystem;
using nlohmann::json;

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("SETA_DATA_DIR")) return env;
  return SETA_DATA_DIR;
}

Workload build_workload(const ExperimentConfig& cfg, const fs::path& config_dir) {
  Workload w;
  const std::uint64_t seed = cfg.seta.train.seed;
  w.base = generate_base(cfg.geometry, seed);
  if (cfg.train_files.empty()) {
    const auto specs = chain_specs(cfg.tasks, cfg.overlaps, cfg.planted, cfg.n_train, cfg.n_eval, cfg.noise, cfg.kind,
                                   cfg.geometry.n_classes);
    w.tasks = generate_sequence(w.base, cfg.geometry, specs, seed, &w.warnings);
    return w;
  }
  for (std::size_t i = 0; i < cfg.train_files.size(); ++i) {
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : config_dir / p; };
    LoadedDataset tr = load_jsonl(resolve(cfg.train_files[i]));
    LoadedDataset ev = load_jsonl(resolve(cfg.eval_files[i]));
    for (auto* d : {&tr, &ev}) {
      w.warnings.insert(w.warnings.end(), d->warnings.begin(), d->warnings.end());
      if (d->dim && *d->dim != cfg.geometry.dim)
        throw ConfigError(fmt::format("dataset {} has dim {}, model.dim is {}", i + 1, *d->dim, cfg.geometry.dim));
      for (const auto& s : d->samples)
        if (cfg.kind == TaskKind::Classification &&
            (s.y != std::floor(s.y) || s.y < 0 || s.y >= cfg.geometry.n_classes))
          throw ConfigError(fmt::format("dataset {} has label {} outside [0,{})", i + 1, s.y, cfg.geometry.n_classes));
    }
    TaskData td;
    td.spec.task_id = int(i) + 1;
    td.spec.kind = cfg.kind;
    td.spec.n_classes = cfg.geometry.n_classes;
    td.train = std::move(tr.samples);
    td.eval = std::move(ev.samples);
    if (td.train.empty() || td.eval.empty()) throw ConfigError(fmt::format("dataset {} is empty", i + 1));
    w.tasks.push_back(std::move(td));
  }
  return w;
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ArtifactError("cannot write " + p.string());
  os << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ArtifactError("missing artifact " + p.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

template <class Fn>
std::string to_string_with(Fn fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

struct Prepared {
  ExperimentConfig cfg;
  fs::path out;
  Workload work;
};

Prepared prepare(const RunOptions& opt, std::ostream& err) {
  Prepared p;
  p.cfg = load_config(opt.config);
  if (opt.seed) p.cfg.seta.train.seed = *opt.seed;
  p.out = opt.out ? *opt.out : fs::path(p.cfg.out_dir);
  p.work = build_workload(p.cfg, opt.config.parent_path());
  for (const auto& w : p.work.warnings) err << "warning: " << w << "\n";
  fs::create_directories(p.out);
  return p;
}

json config_json(const ExperimentConfig& cfg) {
  json j = json::object();
  std::istringstream is(render_config(cfg));
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

json task_json(const TaskReport& r) {
  json j;
  j["task"] = r.task_id;
  j["selected_blocks"] = r.selection.size();
  j["gradient_check_error"] = r.fd_error;
  j["final_epoch_loss"] = r.final_loss;
  j["shared_drift"] = r.shared_drift;
  j["splits"] = r.gate_splits.size();
  j["wall_seconds"] = r.wall_seconds;
  j["accuracy"] = r.accuracy;
  return j;
}

void write_routing(const fs::path& p, const Workload& w, const RunState& st) {
  std::vector<AuditRow> rows;
  long id = 0;
  for (const auto& task : w.tasks)
    for (const auto& s : task.eval) {
      Routing r;
      taskfree_forward(*st.base, st.registry, st.gate, s.x, &r);
      if (!r.experts.empty()) {
        auto a = audit_rows(id, r);
        rows.insert(rows.end(), a.begin(), a.end());
      }
      ++id;
    }
  write_text(p, to_string_with([&](std::ostream& os) { write_routing_audit(os, rows); }));
}

void save_gate(const GateState& gate, const fs::path& p) {
  json j;
  j["top_k"] = gate.top_k();
  j["order"] = gate.order();
  json rows = json::object();
  for (ExpertId id : gate.order()) {
    const Vector& r = gate.row(id);
    rows[std::to_string(id)] = std::vector<double>(r.data(), r.data() + r.size());
  }
  j["rows"] = rows;
  write_text(p, j.dump(2) + "\n");
}

void write_common(const fs::path& out, const AccuracyMatrix& acc, const CapacityLedger& ledger,
                  const std::vector<TraceRecord>& trace) {
  write_text(out / "accuracy_matrix.csv", to_string_with([&](std::ostream& os) { write_accuracy_csv(os, acc); }));
  write_text(out / "capacity_ledger.csv", to_string_with([&](std::ostream& os) { write_ledger_csv(os, ledger); }));
  write_text(out / "selection_trace.txt", to_string_with([&](std::ostream& os) { write_trace(os, trace); }));
}

json metric_json(const AccuracyMatrix& acc) {
  json j;
  if (acc.row_complete(acc.size() - 1)) {
    j["retention_rt"] = retention_rt(acc);
    if (acc.size() >= 2) j["forgetting_ft"] = forgetting_ft(acc);
  }
  return j;
}

}  // namespace

int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  Prepared p = prepare(opt, err);
  const auto& tasks = p.work.tasks;
  json manifest;
  manifest["kind"] = "seta-run";
  manifest["config"] = config_json(p.cfg);
  manifest["eval_sizes"] = json::array();
  for (const auto& t : tasks) manifest["eval_sizes"].push_back(t.eval.size());
  manifest["base_checksum"] = fmt::format("{:016x}", p.work.base.checksum());
  manifest["tasks"] = json::array();

  RunState st = start_run(p.work.base, p.cfg.seta);
  AccuracyMatrix acc(int(tasks.size()));
  CapacityLedger ledger;
  std::vector<TraceRecord> trace;
  auto flush = [&](const std::string& status) {
    manifest["status"] = status;
    manifest["artifacts"] = {{"accuracy_matrix", "accuracy_matrix.csv"},
                             {"capacity_ledger", "capacity_ledger.csv"},
                             {"selection_trace", "selection_trace.txt"},
                             {"routing_audit", "routing_audit.csv"},
                             {"model", "model/manifest.json"},
                             {"registry", "registry/manifest.json"},
                             {"gate", "gate.json"}};
    write_common(p.out, acc, ledger, trace);
    save_model(p.work.base, p.out / "model");
    save_registry(st.registry, p.out / "registry");
    save_gate(st.gate, p.out / "gate.json");
    write_text(p.out / "manifest.json", manifest.dump(2) + "\n");
  };
  try {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      TaskReport rep = run_task(st, tasks[i], std::span<const TaskData>(tasks.data(), i + 1), p.cfg.seta);
      for (std::size_t j = 0; j < rep.accuracy.size(); ++j) acc.set(int(i), int(j), rep.accuracy[j]);
      ledger.rows.push_back(rep.capacity);
      trace.insert(trace.end(), rep.trace.begin(), rep.trace.end());
      json tj = task_json(rep);
      if (tasks[i].planted.size() > 0) {
        tj["planted_blocks"] = tasks[i].planted.size();
        tj["planted_recall"] = double((rep.selection & tasks[i].planted).size()) / double(tasks[i].planted.size());
      }
      manifest["tasks"].push_back(tj);
      out << fmt::format("task {}: {} blocks selected, accuracy on seen tasks:", rep.task_id, rep.selection.size());
      for (double a : rep.accuracy) out << fmt::format(" {:.1f}", a);
      out << "\n";
    }
  } catch (const NumericError& e) {
    manifest["error"] = e.what();
    flush("numeric_failure");
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  if (p.work.base.checksum() != std::stoull(manifest["base_checksum"].get<std::string>(), nullptr, 16))
    throw IntegrityError("base model changed during the run");
  manifest["metrics"] = metric_json(acc);
  write_routing(p.out / "routing_audit.csv", p.work, st);
  flush("ok");
  const json m = manifest["metrics"];
  if (m.contains("retention_rt")) out << fmt::format("R_T = {:.2f}", m["retention_rt"].get<double>());
  if (m.contains("forgetting_ft")) out << fmt::format("  F_T = {:.2f}", m["forgetting_ft"].get<double>());
  out << "\nartifacts written to " << p.out.string() << "\n";
  return kExitOk;
}

int cmd_baseline(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  if (opt.method != "seq" && opt.method != "ewc")
    throw ConfigError(fmt::format("unknown method '{}'; valid methods: seq, ewc", opt.method));
  Prepared p = prepare(opt, err);
  BaselineResult res;
  try {
    res = opt.method == "seq" ? baseline_seq_train(p.work.base, p.work.tasks, p.cfg.seta)
                              : baseline_ewc_lite(p.work.base, p.work.tasks, p.cfg.seta, p.cfg.ewc_lambda);
  } catch (const NumericError& e) {
    json manifest;
    manifest["kind"] = "baseline";
    manifest["method"] = opt.method;
    manifest["status"] = "numeric_failure";
    manifest["error"] = e.what();
    write_text(p.out / "manifest.json", manifest.dump(2) + "\n");
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  write_common(p.out, res.accuracy, res.ledger, res.trace);
  write_text(p.out / "routing_audit.csv", "sample_id,expert_id,logit,softmax_weight,active_flag\n");
  json manifest;
  manifest["kind"] = "baseline";
  manifest["method"] = opt.method;
  manifest["status"] = "ok";
  manifest["config"] = config_json(p.cfg);
  manifest["eval_sizes"] = json::array();
  for (const auto& t : p.work.tasks) manifest["eval_sizes"].push_back(t.eval.size());
  manifest["metrics"] = metric_json(res.accuracy);
  write_text(p.out / "manifest.json", manifest.dump(2) + "\n");
  const json m = manifest["metrics"];
  out << opt.method << ":";
  if (m.contains("retention_rt")) out << fmt::format(" R_T = {:.2f}", m["retention_rt"].get<double>());
  if (m.contains("forgetting_ft")) out << fmt::format("  F_T = {:.2f}", m["forgetting_ft"].get<double>());
  out << "\nartifacts written to " << p.out.string() << "\n";
  return kExitOk;
}

namespace {

Table load_table(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw ArtifactError("missing fixture " + p.string());
  return read_table(is);
}

struct CheckLog {
  std::ostream& out;
  int failed = 0;
  int passed = 0;

  void record(bool ok, const std::string& line) {
    (ok ? passed : failed) += 1;
    out << (ok ? "PASS " : "FAIL ") << line << "\n";
  }
};

}  // namespace

int cmd_verify_fixtures(const fs::path& dir, std::ostream& out, std::ostream& err) {
  const Table matrix_table = load_table(dir / "accuracy_matrix_reference.csv");
  const Table general = load_table(dir / "general_benchmarks.csv");
  const Table finals = load_table(dir / "final_accuracy.csv");
  const Table checks = load_table(dir / "checks.csv");
  const Table util = load_table(dir / "shared_utilization.csv");
  std::map<std::string, CapacityLedger> ledgers;
  for (const std::string budget : {"960", "1280"}) {
    std::ifstream is(dir / ("capacity_budget_" + budget + ".csv"));
    if (!is) throw ArtifactError("missing fixture " + (dir / ("capacity_budget_" + budget + ".csv")).string());
    ledgers[budget] = read_ledger_csv(is);
  }
  std::ifstream mis(dir / "accuracy_matrix_reference.csv");
  const AccuracyMatrix m = read_accuracy_csv(mis);

  CheckLog log{out};
  auto general_row = [&](const std::string& method) -> std::size_t {
    const auto c = general.column("method");
    for (std::size_t r = 0; r < general.rows.size(); ++r)
      if (general.rows[r][c] == method) return r;
    throw ParseError("general_benchmarks.csv has no row '" + method + "'");
  };
  auto scores = [&](std::size_t r) {
    return std::vector<double>{general.number(r, "mmlu"), general.number(r, "bbh"), general.number(r, "piqa")};
  };
  auto final_row = [&](const std::string& method) -> std::size_t {
    const auto c = finals.column("method");
    for (std::size_t r = 0; r < finals.rows.size(); ++r)
      if (finals.rows[r][c] == method) return r;
    throw ParseError("final_accuracy.csv has no row '" + method + "'");
  };

  for (std::size_t r = 0; r < checks.rows.size(); ++r) {
    const std::string name = checks.rows[r][checks.column("check")];
    const double expected = checks.number(r, "expected"), tol = checks.number(r, "tolerance");
    const auto colon = name.find(':');
    const std::string kind = name.substr(0, colon), arg = colon == std::string::npos ? "" : name.substr(colon + 1);
    double got = 0.0;
    if (kind == "retention_rt") got = retention_rt(m);
    else if (kind == "forgetting_ft") got = forgetting_ft(m);
    else if (kind == "acc_t") got = acc_t(m, std::stoi(arg));
    else if (kind == "gen_loss") got = gen_loss(scores(general_row("zero_shot")), scores(general_row(arg)));
    else if (kind == "final_rt") {
      const auto fr = final_row(arg);
      got = 0.0;
      for (int j = 1; j <= 6; ++j) got += finals.number(fr, fmt::format("T{}", j)) / 6.0;
    } else {
      throw ParseError("unknown check '" + name + "'");
    }
    log.record(std::abs(got - expected) <= tol, fmt::format("{}: computed {:.4f}, published {} (tolerance {})", name, got, expected, tol));
  }

  // Final matrix row against the rounded final-accuracy table, naming any off cell.
  {
    const auto fr = final_row("SETA");
    const int T = m.size();
    for (int j = 0; j < T; ++j) {
      const double a = m.at(T - 1, j), b = finals.number(fr, fmt::format("T{}", j + 1));
      if (std::abs(a - b) > 0.05)
        log.record(false, fmt::format("matrix cell (step {}, T{}) = {} disagrees with final accuracy {}", T, j + 1, a, b));
    }
  }

  for (auto& [budget, ledger] : ledgers) {
    for (const auto& row : ledger.rows)
      log.record(row.balanced(), fmt::format("budget {} step {}: {} = {} shared + {} unique", budget, row.step,
                                             row.total, row.shared, row.unique_sum()));
    std::vector<CapacityReportRow> rep;
    try {
      rep = capacity_report(ledger);
    } catch (const IntegrityError& e) {
      log.record(false, e.what());
      continue;
    }
    for (std::size_t i = 0; i < rep.size() && i < util.rows.size(); ++i) {
      const double published = util.number(i, "pct_" + budget);
      const long total = long(util.number(i, "total_" + budget)), shared = long(util.number(i, "shared_" + budget));
      log.record(total == rep[i].row.total && shared == rep[i].row.shared,
                 fmt::format("budget {} step {}: utilization table totals {}/{} match ledger", budget, i + 1, shared, total));
      log.record(std::abs(rep[i].shared_pct - published) <= 0.05,
                 fmt::format("budget {} step {}: shared {:.2f}%, published {}% (tolerance 0.05)", budget, i + 1,
                             rep[i].shared_pct, published));
    }
  }
  out << fmt::format("{} passed, {} failed\n", log.passed, log.failed);
  if (log.failed > 0) {
    err << "fixture verification failed\n";
    return 1;
  }
  return kExitOk;
}

int cmd_report(const fs::path& run_dir, std::ostream& out, std::ostream&) {
  const json manifest = json::parse(read_text(run_dir / "manifest.json"));
  std::istringstream acc_is(read_text(run_dir / "accuracy_matrix.csv"));
  const AccuracyMatrix acc = read_accuracy_csv(acc_is);
  std::istringstream led_is(read_text(run_dir / "capacity_ledger.csv"));
  const CapacityLedger ledger = read_ledger_csv(led_is);
  std::istringstream tr_is(read_text(run_dir / "selection_trace.txt"));
  const auto trace = read_trace(tr_is);
  std::istringstream au_is(read_text(run_dir / "routing_audit.csv"));
  const auto audit = read_routing_audit(au_is);

  const fs::path rep = run_dir / "report";
  fs::create_directories(rep);
  const auto util = capacity_report(ledger);

  write_text(rep / "composition.csv", to_string_with([&](std::ostream& os) {
    std::size_t width = 0;
    for (const auto& r : ledger.rows) width = std::max(width, r.unique.size());
    os << "step,shared";
    for (std::size_t t = 1; t <= width; ++t) os << ",unique_t" << t;
    os << ",total\n";
    for (const auto& r : ledger.rows) {
      os << r.step << "," << r.shared;
      for (std::size_t t = 0; t < width; ++t) os << "," << (t < r.unique.size() ? r.unique[t] : 0);
      os << "," << r.total << "\n";
    }
  }));
  write_text(rep / "utilization.csv", to_string_with([&](std::ostream& os) { write_capacity_report(os, util); }));

  std::vector<GrowthPoint> growth;
  const auto by_task = selections_by_task(trace);
  if (by_task.size() >= 2) {
    std::vector<IndexSet> sels;
    for (const auto& kv : by_task) sels.push_back(kv.second);
    SosThresholds th;
    const json& c = manifest.at("config");
    th.tau_ect = std::stoi(c.at("sos.tau_ect").get<std::string>());
    th.tau_trt = std::stoi(c.at("sos.tau_trt").get<std::string>());
    const bool single = manifest.at("kind") == "baseline";
    long independent = 0;
    if (single) {
      IndexSet u;
      for (std::size_t i = 0; i < sels.size(); ++i) {
        u |= sels[i];
        independent += long(sels[i].size());
        growth.push_back({int(i) + 1, long(u.size()), independent});
      }
    } else {
      growth = growth_curve(sels, th);
    }
  }
  write_text(rep / "growth.csv", to_string_with([&](std::ostream& os) {
    os << "step,sos_total,independent_total\n";
    for (const auto& g : growth) os << g.step << "," << g.sos_total << "," << g.independent_total << "\n";
  }));

  // Active experts per evaluated task: distinct experts ever in the top-k, and mean top-k size.
  std::vector<long> sizes;
  for (const auto& s : manifest.at("eval_sizes")) sizes.push_back(s.get<long>());
  write_text(rep / "active_experts.csv", to_string_with([&](std::ostream& os) {
    os << "task,distinct_active_experts,mean_active_per_sample,mean_top_weight\n";
    long start = 0;
    for (std::size_t t = 0; t < sizes.size(); ++t) {
      const long end = start + sizes[t];
      std::set<ExpertId> distinct;
      std::map<long, int> per_sample;
      std::map<long, double> top;
      for (const auto& a : audit) {
        if (a.sample_id < start || a.sample_id >= end || !a.active) continue;
        distinct.insert(a.expert_id);
        per_sample[a.sample_id] += 1;
        top[a.sample_id] = std::max(top[a.sample_id], a.softmax_weight);
      }
      double mean_active = 0.0, mean_top = 0.0;
      for (const auto& kv : per_sample) mean_active += kv.second;
      for (const auto& kv : top) mean_top += kv.second;
      if (!per_sample.empty()) {
        mean_active /= double(per_sample.size());
        mean_top /= double(top.size());
      }
      os << fmt::format("{},{},{:.4f},{:.4f}\n", t + 1, distinct.size(), mean_active, mean_top);
      start = end;
    }
  }));

  out << "run: " << run_dir.string() << " (" << manifest.value("kind", "?") << ")\n";
  for (int i = 0; i < acc.size(); ++i) {
    if (!acc.row_complete(i)) break;
    out << fmt::format("after task {}: Acc_t = {:6.2f}  shared {:4d} / {:4d} blocks ({:.1f}%)\n", i + 1, acc_t(acc, i + 1),
                       i < int(util.size()) ? util[std::size_t(i)].row.shared : 0,
                       i < int(util.size()) ? util[std::size_t(i)].row.total : 0,
                       i < int(util.size()) ? util[std::size_t(i)].shared_pct : 0.0);
  }
  if (acc.row_complete(acc.size() - 1)) {
    out << fmt::format("R_T = {:.2f}", retention_rt(acc));
    if (acc.size() >= 2) out << fmt::format("  F_T = {:.2f}", forgetting_ft(acc));
    out << "\n";
  }
  if (!growth.empty())
    out << fmt::format("blocks after task {}: {} with sharing vs {} independent ({:.1f}%)\n", growth.back().step,
                       growth.back().sos_total, growth.back().independent_total,
                       100.0 * double(growth.back().sos_total) / double(growth.back().independent_total));
  out << "plot data written to " << rep.string() << "\n";
  return kExitOk;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Sparse expert continual learning on synthetic task sequences"};
  app.require_subcommand(1);
  RunOptions opt;
  std::string out_dir;
  std::uint64_t seed = 0;
  fs::path fixtures = default_data_dir() / "fixtures";
  fs::path run_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "experiment config file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "master seed (overrides train.seed)");
  };
  CLI::App* run = app.add_subcommand("run", "train the expert model on the task sequence");
  add_common(run);
  CLI::App* base = app.add_subcommand("baseline", "train a single-delta baseline on the same stream");
  add_common(base);
  base->add_option("--method", opt.method, "seq or ewc")->required();
  CLI::App* verify = app.add_subcommand("verify-fixtures", "recompute published metrics from bundled fixtures");
  verify->add_option("--fixtures", fixtures, "fixture directory");
  CLI::App* report = app.add_subcommand("report", "summarise a run directory and emit plot-ready CSVs");
  report->add_option("run_dir", run_dir, "run output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (!out_dir.empty()) opt.out = out_dir;
  if ((run->parsed() || base->parsed()) && (run->count("--seed") || base->count("--seed"))) opt.seed = seed;

  try {
    if (run->parsed()) return cmd_run(opt, std::cout, std::cerr);
    if (base->parsed()) return cmd_baseline(opt, std::cout, std::cerr);
    if (verify->parsed()) return cmd_verify_fixtures(fixtures, std::cout, std::cerr);
    if (report->parsed()) return cmd_report(run_dir, std::cout, std::cerr);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kExitMissing;
  } catch (const json::exception& e) {
    std::cerr << "malformed manifest: " << e.what() << "\n";
    return kExitMissing;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace seta
