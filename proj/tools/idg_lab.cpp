// idg-lab: dataset generation, encoder training, probing, reporting and the
// finite-world verification suites.
//
// Exit codes: 0 success, 1 assertion failure, 2 budget exceeded, 64 usage,
// 65 malformed input data, 66 missing input.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "idg/data.hpp"
#include "idg/errors.hpp"
#include "idg/experiments.hpp"
#include "idg/objectives.hpp"
#include "idg/suites.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace idg;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitBudget = 2;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;
constexpr int kExitMissing = 66;

struct ExitError {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, std::string msg) { throw ExitError{code, std::move(msg)}; }

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) fail(kExitMissing, "missing input: " + path);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(kExitMissing, "cannot write " + path.string());
  f << text;
}

std::string read_text(const fs::path& path) {
  require_file(path.string());
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(kExitData, path.string() + ": " + e.what());
  }
}

// Shortest representation that round-trips.
std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Short name for directories: 0.1 -> "0.1", 1e-2 -> "0.01".
std::string short_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      fail(kExitUsage, "bad value '" + tok + "' in --lambda-grid");
    }
  }
  if (out.empty()) fail(kExitUsage, "--lambda-grid is empty");
  return out;
}

unsigned default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---- verify ---------------------------------------------------------------

struct VerifyArgs {
  std::string suite = "all";
  std::size_t worlds = 100;
  std::uint64_t seed = 0;
  std::uint64_t budget = kDefaultEnumerationBudget;
  bool allow_invalid = false;
  std::string output;
};

int run_verify(const VerifyArgs& a, unsigned jobs) {
  if (a.worlds == 0) fail(kExitUsage, "--worlds must be at least 1");
  SuiteOptions o;
  o.worlds = a.worlds;
  o.seed = a.seed;
  o.jobs = jobs;
  o.budget = a.budget;
  o.allow_invalid = a.allow_invalid;
  std::vector<std::string> names = a.suite == "all" ? kSuiteNames : std::vector<std::string>{a.suite};
  json report = {{"worlds", a.worlds}, {"seed", a.seed}, {"allow_invalid", a.allow_invalid}};
  json suites = json::array();
  bool ok = true;
  for (const auto& n : names) {
    SuiteReport r;
    try {
      r = run_suite(n, o);
    } catch (const BudgetExceeded& e) {
      fail(kExitBudget, "suite " + n + ": " + e.what());
    }
    ok = ok && r.passed;
    std::cerr << n << ": " << (r.passed ? "pass" : "FAIL") << " (" << r.checked << " checked, "
              << r.not_applicable << " not applicable, " << r.failures.size() << " failures)\n";
    for (std::size_t k = 0; k < std::min<std::size_t>(r.failures.size(), 10); ++k)
      std::cerr << "  " << r.failures[k] << "\n";
    suites.push_back(r);
  }
  report["suites"] = suites;
  report["passed"] = ok;
  const std::string text = report.dump(2) + "\n";
  if (a.output.empty())
    std::cout << text;
  else
    write_text(a.output, text);
  return ok ? 0 : kExitFail;
}

// ---- gen / ingest ---------------------------------------------------------

struct GenArgs {
  SyntheticSpec spec;
  std::string overlap = "disjoint";
  std::uint64_t seed = 0;
  std::string output;
};

int run_gen(GenArgs a) {
  if (a.spec.n_domains == 0 || a.spec.n_labels == 0 || a.spec.per_cluster == 0)
    fail(kExitUsage, "--domains, --labels and --per-cluster must be positive");
  if (!(a.spec.val_fraction >= 0.0 && a.spec.val_fraction < 1.0))
    fail(kExitUsage, "--val-fraction must lie in [0, 1)");
  a.spec.overlap = a.overlap == "shared" ? Overlap::Shared : Overlap::Disjoint;
  const EmbeddingDataset d = gen_synthetic(a.seed, a.spec);
  write_text(a.output, to_csv(d));
  return 0;
}

int run_ingest(const std::string& path) {
  require_file(path);
  const IngestReport r = ingest_csv_text(read_text(path), path);
  json counts = json::array();
  for (const auto& [key, n] : r.counts)
    counts.push_back({{"domain", std::get<0>(key)}, {"label", std::get<1>(key)}, {"split", std::get<2>(key)}, {"rows", n}});
  const json out = {{"file", path},
                    {"rows", r.data.size()},
                    {"width", r.data.width()},
                    {"domains", r.data.n_domains()},
                    {"labels", r.data.n_labels()},
                    {"counts", counts}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

EmbeddingDataset load_data(const std::string& path) {
  require_file(path);
  return ingest_csv_text(read_text(path), path).data;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string output;
  std::string objective = "ce";
  std::string bottleneck = "none";
  double lambda = 0.0;
  std::string lambda_grid;
  double tau = kDefaultTemperature;
  std::string regime = "supervised";
  std::size_t regime_domain = 0;
  double mix = 0.1;
  double standard_noise = 0.1;
  bool stochastic = false;
  bool no_labels = false;
  std::size_t hidden = 32;
  std::size_t out = 32;
  double lr = 3e-3;
  std::size_t epochs = 100;
  std::size_t batch_per_domain = 16;
  std::vector<std::size_t> train_domains;
  std::uint64_t seed = 0;
};

RegimeSpec parse_regime(const TrainArgs& a) {
  if (a.regime == "supervised") return RegimeSpec::supervised();
  if (a.regime == "singledom") return RegimeSpec::single_dom(a.regime_domain);
  if (a.regime == "intradom") return RegimeSpec::intra_dom();
  if (a.regime == "approxda") return RegimeSpec::approx_da(a.mix);
  if (a.regime == "standard") {
    RegimeSpec r;
    r.kind = RegimeSpec::Kind::Standard;
    return r;
  }
  fail(kExitUsage, "unknown regime '" + a.regime + "'");
}

TrainConfig train_config(const TrainArgs& a) {
  TrainConfig c;
  c.objective = objective_from_string(a.objective);
  c.bottleneck = bottleneck_from_string(a.bottleneck);
  c.lambda = a.lambda;
  c.tau = a.tau;
  c.regime = parse_regime(a);
  c.standard_noise = a.standard_noise;
  c.hidden = a.hidden;
  c.out = a.out;
  c.stochastic = a.stochastic;
  c.lr = a.lr;
  c.epochs = a.epochs;
  c.batch_per_domain = a.batch_per_domain;
  c.train_domains = a.train_domains;
  c.seed = a.seed;
  c.use_labels = !a.no_labels;
  return c;
}

void train_one(const EmbeddingDataset& data, const TrainConfig& c, const std::string& data_path, const fs::path& dir) {
  const TrainResult r = train(data, c);
  fs::create_directories(dir);
  const json extra = {{"spec", r.spec}, {"config", c}};
  ad::save_checkpoint((dir / "checkpoint").string(), r.params, extra);
  write_text(dir / "history.csv", history_csv(r.history));
  const json manifest = {{"command", "train"},
                         {"data", data_path},
                         {"lambda", c.lambda},
                         {"tau", c.tau},
                         {"regime", c.regime},
                         {"seed", c.seed},
                         {"empty_pools", r.empty_pools},
                         {"config", c}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

int run_train(const TrainArgs& a) {
  TrainConfig c;
  try {
    c = train_config(a);
  } catch (const idg::ParseError& e) {
    fail(kExitUsage, e.what());
  }
  const EmbeddingDataset data = load_data(a.data);
  std::vector<double> lambdas = a.lambda_grid.empty() ? std::vector<double>{a.lambda} : parse_grid(a.lambda_grid);
  // Validate every grid point before training any of them.
  for (double l : lambdas) {
    TrainConfig ci = c;
    ci.lambda = l;
    try {
      validate_config(ci, data);
    } catch (const Error& e) {
      fail(kExitUsage, e.what());
    }
  }
  for (double l : lambdas) {
    TrainConfig ci = c;
    ci.lambda = l;
    const fs::path dir = a.lambda_grid.empty() ? fs::path(a.output) : fs::path(a.output) / ("lambda=" + short_double(l));
    train_one(data, ci, a.data, dir);
    std::cerr << "trained " << dir.string() << "\n";
  }
  return 0;
}

// ---- probe ----------------------------------------------------------------

struct ProbeArgs {
  std::string data;
  std::string checkpoint;
  std::string output;
  std::string mode = "worst";
  std::string pairs = "all";
  double sample_weight = kDefaultSampleWeight;
  std::vector<std::uint64_t> seeds;
  std::size_t max_iters = 3000;
};

std::vector<std::size_t> parse_ids(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      fail(kExitUsage, "bad domain id '" + tok + "'");
    }
  }
  return out;
}

int run_probe(const ProbeArgs& a, unsigned jobs) {
  const std::string prefix = (fs::path(a.checkpoint) / "checkpoint").string();
  require_file(prefix + ".json");
  require_file(prefix + ".bin");
  const EmbeddingDataset data = load_data(a.data);
  json extra;
  TrainResult model;
  TrainConfig config;
  try {
    model.params = ad::load_checkpoint(prefix, &extra);
    model.spec = extra.at("spec").get<MlpSpec>();
    config = extra.at("config").get<TrainConfig>();
  } catch (const json::exception& e) {
    fail(kExitData, prefix + ".json: " + e.what());
  }
  if (model.spec.in != data.width())
    fail(kExitUsage, "checkpoint expects " + std::to_string(model.spec.in) + " features, data has " +
                         std::to_string(data.width()));

  PairOptions po;
  if (a.mode == "avg")
    po.mode = ProbeMode::Average;
  else if (a.mode == "worst")
    po.mode = ProbeMode::Worst;
  else
    fail(kExitUsage, "--mode must be avg or worst");
  po.sample_weight = a.sample_weight;
  po.probe.max_iters = a.max_iters;
  po.seeds = a.seeds.empty() ? std::vector<std::uint64_t>{config.seed} : a.seeds;
  po.jobs = jobs;
  if (a.pairs != "all") {
    // "s:t" restricts sources and targets, each a comma list (empty: all).
    const auto colon = a.pairs.find(':');
    if (colon == std::string::npos) fail(kExitUsage, "--pairs must be 'all' or 'SOURCES:TARGETS'");
    po.sources = parse_ids(a.pairs.substr(0, colon));
    po.targets = parse_ids(a.pairs.substr(colon + 1));
  }

  const ProbeResult r = evaluate_all_pairs(embed_dataset(data, model), po);
  const fs::path dir(a.output);
  fs::create_directories(dir);
  write_text(dir / "probe.csv", probe_csv(r));
  write_text(dir / "probe.json", json(r).dump(2) + "\n");
  const json manifest = {{"command", "probe"},
                         {"data", a.data},
                         {"checkpoint", a.checkpoint},
                         {"mode", a.mode},
                         {"pairs", a.pairs},
                         {"sample_weight", a.sample_weight},
                         {"seeds", po.seeds},
                         {"max_iters", a.max_iters},
                         {"train", config}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

// ---- report ---------------------------------------------------------------

struct ReportRow {
  std::string objective, bottleneck, regime;
  double lambda = 0.0;
  std::vector<double> target_ll, source_ll, target_acc, source_acc;  // one per probe run
};

std::string regime_label(const json& r) {
  const std::string name = r.at("regime").get<std::string>();
  if (name == "single_dom") return name + "(" + std::to_string(r.value("domain", 0)) + ")";
  if (name == "approx_da") return name + "(" + short_double(r.value("mix", 0.1)) + ")";
  return name;
}

std::string table_csv(const std::vector<ReportRow>& rows) {
  std::string out = "objective,bottleneck,regime,lambda,runs,target_ll,target_ll_se,source_ll,source_ll_se,target_acc,source_acc\n";
  for (const auto& r : rows) {
    const MeanSe t = mean_se(r.target_ll), s = mean_se(r.source_ll);
    out += r.objective + "," + r.bottleneck + "," + r.regime + "," + fmt_double(r.lambda) + "," +
           std::to_string(r.target_ll.size()) + "," + fmt_double(t.mean) + "," + fmt_double(t.se) + "," +
           fmt_double(s.mean) + "," + fmt_double(s.se) + "," + fmt_double(mean_se(r.target_acc).mean) + "," +
           fmt_double(mean_se(r.source_acc).mean) + "\n";
  }
  return out;
}

// Probe directories are found recursively under each input path; runs that
// differ only in seed are merged into one row with a standard error.
int run_report(const std::vector<std::string>& inputs, const std::string& output) {
  std::vector<fs::path> dirs;
  for (const auto& in : inputs) {
    if (!fs::exists(in)) fail(kExitMissing, "missing input: " + in);
    if (fs::is_regular_file(fs::path(in) / "probe.json")) dirs.emplace_back(in);
    if (fs::is_directory(in))
      for (const auto& e : fs::recursive_directory_iterator(in))
        if (e.is_regular_file() && e.path().filename() == "probe.json" && e.path().parent_path() != fs::path(in))
          dirs.push_back(e.path().parent_path());
  }
  std::sort(dirs.begin(), dirs.end());
  dirs.erase(std::unique(dirs.begin(), dirs.end()), dirs.end());
  if (dirs.empty()) fail(kExitMissing, "no probe results under the given paths");

  std::map<std::tuple<std::string, std::string, std::string, double>, ReportRow> groups;
  for (const auto& d : dirs) {
    const json m = read_json(d / "manifest.json");
    const json p = read_json(d / "probe.json");
    try {
      const json& c = m.at("train");
      ReportRow key;
      key.objective = c.at("objective").get<std::string>();
      key.bottleneck = c.at("bottleneck").get<std::string>();
      key.regime = regime_label(c.at("regime"));
      key.lambda = c.at("lambda").get<double>();
      ReportRow& row = groups.try_emplace({key.objective, key.bottleneck, key.regime, key.lambda}, key).first->second;
      row.target_ll.push_back(p.at("target_ll").at("mean").get<double>());
      row.source_ll.push_back(p.at("source_ll").at("mean").get<double>());
      row.target_acc.push_back(p.at("target_acc").at("mean").get<double>());
      row.source_acc.push_back(p.at("source_acc").at("mean").get<double>());
    } catch (const json::exception& e) {
      fail(kExitData, d.string() + ": " + e.what());
    }
  }
  std::vector<ReportRow> by_lambda;
  for (auto& [_, r] : groups) by_lambda.push_back(r);
  std::vector<ReportRow> by_regime = by_lambda;
  std::stable_sort(by_regime.begin(), by_regime.end(),
                   [](const ReportRow& x, const ReportRow& y) { return x.regime < y.regime; });

  const fs::path out(output);
  fs::create_directories(out);
  write_text(out / "lambda_table.csv", table_csv(by_lambda));
  write_text(out / "regime_table.csv", table_csv(by_regime));
  json runs = json::array();
  for (const auto& d : dirs) runs.push_back(d.generic_string());
  write_text(out / "manifest.json", json{{"command", "report"}, {"runs", runs}}.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-world verification and representation experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML config file mirroring the flags");
  unsigned jobs = default_jobs();
  app.add_option("--jobs", jobs, "Parallel workers for suites and pair grids")->check(CLI::PositiveNumber);

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run the finite-world verification suites");
  std::vector<std::string> suite_choices = kSuiteNames;
  suite_choices.push_back("all");
  verify->add_option("--suite", va.suite)->check(CLI::IsMember(suite_choices));
  verify->add_option("--worlds", va.worlds);
  verify->add_option("--seed", va.seed)->envname("IDGLAB_SEED");
  verify->add_option("--budget", va.budget, "Enumeration budget per world");
  verify->add_flag("--allow-invalid", va.allow_invalid, "Mix in assumption-violating worlds");
  verify->add_option("-o,--output", va.output, "Write the JSON report here instead of stdout");

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "Generate the synthetic embedding dataset");
  gen->add_option("--domains", ga.spec.n_domains);
  gen->add_option("--labels", ga.spec.n_labels);
  gen->add_option("--per-cluster", ga.spec.per_cluster);
  gen->add_option("--label-dims", ga.spec.label_dims);
  gen->add_option("--domain-dims", ga.spec.domain_dims);
  gen->add_option("--label-sep", ga.spec.label_separation);
  gen->add_option("--domain-sep", ga.spec.domain_separation);
  gen->add_option("--noise", ga.spec.noise);
  gen->add_option("--val-fraction", ga.spec.val_fraction);
  gen->add_option("--overlap", ga.overlap)->check(CLI::IsMember({"disjoint", "shared"}));
  gen->add_option("--seed", ga.seed)->envname("IDGLAB_SEED");
  gen->add_option("-o,--output", ga.output)->required();

  std::string ingest_path;
  auto* ingest = app.add_subcommand("ingest", "Validate a dataset CSV and print its counts");
  ingest->add_option("file", ingest_path)->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train an encoder");
  tr->add_option("--data", ta.data)->required();
  tr->add_option("-o,--output", ta.output)->required();
  tr->add_option("--objective", ta.objective)->check(CLI::IsMember({"ce", "infonce"}));
  tr->add_option("--bottleneck", ta.bottleneck)->check(CLI::IsMember({"none", "cad", "ccad", "ent", "mi"}));
  auto* lambda_opt = tr->add_option("--lambda", ta.lambda);
  tr->add_option("--lambda-grid", ta.lambda_grid, "Comma list; one checkpoint per value")->excludes(lambda_opt);
  tr->add_option("--tau", ta.tau);
  tr->add_option("--regime", ta.regime)
      ->check(CLI::IsMember({"supervised", "singledom", "intradom", "approxda", "standard"}));
  tr->add_option("--regime-domain", ta.regime_domain, "Domain used by singledom");
  tr->add_option("--mix", ta.mix, "Supervised weight of approxda");
  tr->add_option("--standard-noise", ta.standard_noise);
  tr->add_flag("--stochastic", ta.stochastic);
  tr->add_flag("--no-labels", ta.no_labels);
  tr->add_option("--hidden", ta.hidden);
  tr->add_option("--out-dim", ta.out);
  tr->add_option("--lr", ta.lr);
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--batch-per-domain", ta.batch_per_domain);
  tr->add_option("--train-domains", ta.train_domains)->delimiter(',');
  tr->add_option("--seed", ta.seed)->envname("IDGLAB_SEED");

  ProbeArgs pa;
  auto* probe = app.add_subcommand("probe", "Probe a checkpoint on every (source, target) pair");
  probe->add_option("--data", pa.data)->required();
  probe->add_option("--checkpoint", pa.checkpoint)->required();
  probe->add_option("-o,--output", pa.output)->required();
  probe->add_option("--mode", pa.mode)->check(CLI::IsMember({"avg", "worst"}));
  probe->add_option("--pairs", pa.pairs, "'all' or 'SOURCES:TARGETS'");
  probe->add_option("--sample-weight", pa.sample_weight);
  probe->add_option("--seeds", pa.seeds, "Probe seeds (default: the training seed)")->delimiter(',');
  probe->add_option("--max-iters", pa.max_iters);

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Merge probe runs into lambda and regime tables");
  report->add_option("runs", report_inputs)->required();
  report->add_option("-o,--output", report_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*verify) return run_verify(va, jobs);
    if (*gen) return run_gen(ga);
    if (*ingest) return run_ingest(ingest_path);
    if (*tr) return run_train(ta);
    if (*probe) return run_probe(pa, jobs);
    if (*report) return run_report(report_inputs, report_out);
  } catch (const ExitError& e) {
    std::cerr << "idg-lab: " << e.message << "\n";
    return e.code;
  } catch (const BudgetExceeded& e) {
    std::cerr << "idg-lab: " << e.what() << "\n";
    return kExitBudget;
  } catch (const idg::ParseError& e) {
    std::cerr << "idg-lab: " << e.what() << "\n";
    return kExitData;
  } catch (const HypothesisError& e) {
    std::cerr << "idg-lab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "idg-lab: " << e.what() << "\n";
    return kExitFail;
  }
  return kExitUsage;
}
