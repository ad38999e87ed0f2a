#include "htn/cli.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace htn::cli {

using nlohmann::json;

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

const char* norm_name(Normalization n) {
  switch (n) {
    case Normalization::Full: return "full";
    case Normalization::Threshold: return "threshold";
    case Normalization::Weight: return "weight";
    case Normalization::None: return "none";
  }
  return "full";
}

std::string t_or_w(const LossConfig& loss) {
  if (loss.norm == Normalization::Threshold) return fmt(loss.t);
  if (loss.norm == Normalization::Weight) return fmt(loss.w);
  return "";
}

json metrics_json(const SetMetrics& m) {
  return {{"loss", m.loss},
          {"accuracy", m.accuracy},
          {"abstention", m.abstention},
          {"retained_trace", m.retained_trace}};
}

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t seed) {
  split_seed = seed;
  model_seed = seed;
  sweep.seed = seed;
  dataset.seed = seed;
}

void ExperimentConfig::validate() const {
  if (dataset.kind != "iris" && dataset.kind != "mnist" && dataset.kind != "synthetic")
    throw ConfigError("dataset.kind must be iris, mnist or synthetic");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("split.train_fraction must lie in (0, 1)");
  if (chi < 1 || xi < 1) throw ConfigError("model.chi and model.xi must be >= 1");
  if (output_dims.empty()) throw ConfigError("model.output_dims must not be empty");
  if (init != "data" && init != "random") throw ConfigError("model.init must be data or random");
  if (has_grid() && grid_t.empty() == grid_w.empty())
    throw ConfigError("grid: exactly one of t and w must be given");
  for (auto c : grid_chi)
    if (c < 1) throw ConfigError("grid.chi entries must be >= 1");
  for (auto x : grid_xi)
    if (x < 1) throw ConfigError("grid.xi entries must be >= 1");
  try {
    loss.validate();
    sweep.validate();
    for (double t : grid_t) LossConfig::threshold(t, loss.lambda).validate();
    for (double w : grid_w) LossConfig::weight(w, loss.lambda).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    check_keys(j, "config", {"name", "dataset", "split", "model", "loss", "sweep", "grid"});
    read(j, "name", c.name);
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      check_keys(d, "dataset", {"kind", "path", "images", "labels", "classes", "limit", "samples",
                                "features", "num_classes", "seed"});
      read(d, "kind", c.dataset.kind);
      if (d.contains("path")) c.dataset.path = resolve(base_dir, d["path"].get<std::string>());
      if (d.contains("images")) c.dataset.images = resolve(base_dir, d["images"].get<std::string>());
      if (d.contains("labels")) c.dataset.labels = resolve(base_dir, d["labels"].get<std::string>());
      if (d.contains("classes")) {
        const auto v = d["classes"].get<std::vector<int>>();
        if (v.size() != 2) throw ConfigError("dataset.classes must list two digits");
        c.dataset.classes = {v[0], v[1]};
      }
      read(d, "limit", c.dataset.limit);
      read(d, "samples", c.dataset.samples);
      read(d, "features", c.dataset.features);
      read(d, "num_classes", c.dataset.num_classes);
      read(d, "seed", c.dataset.seed);
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      check_keys(s, "split", {"train_fraction", "seed"});
      read(s, "train_fraction", c.train_fraction);
      read(s, "seed", c.split_seed);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      check_keys(m, "model", {"chi", "xi", "output_dims", "init", "seed"});
      read(m, "chi", c.chi);
      read(m, "xi", c.xi);
      read(m, "output_dims", c.output_dims);
      read(m, "init", c.init);
      read(m, "seed", c.model_seed);
    }
    if (j.contains("loss")) {
      const auto& l = j["loss"];
      check_keys(l, "loss", {"normalization", "t", "w", "lambda", "kind"});
      std::string norm = "full", kind = "cross_entropy";
      read(l, "normalization", norm);
      read(l, "kind", kind);
      read(l, "t", c.loss.t);
      read(l, "w", c.loss.w);
      read(l, "lambda", c.loss.lambda);
      if (norm == "full") c.loss.norm = Normalization::Full;
      else if (norm == "threshold") c.loss.norm = Normalization::Threshold;
      else if (norm == "weight") c.loss.norm = Normalization::Weight;
      else if (norm == "none") c.loss.norm = Normalization::None;
      else throw ConfigError("loss.normalization must be full, threshold, weight or none");
      if (kind == "cross_entropy") c.loss.kind = LossKind::CrossEntropy;
      else if (kind == "mse") c.loss.kind = LossKind::MSE;
      else throw ConfigError("loss.kind must be cross_entropy or mse");
    }
    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      check_keys(s, "sweep", {"n_sweeps", "adam_steps_per_site", "lr", "beta1", "beta2", "eps",
                              "seed", "check_cache"});
      read(s, "n_sweeps", c.sweep.n_sweeps);
      read(s, "adam_steps_per_site", c.sweep.adam_steps_per_site);
      read(s, "lr", c.sweep.adam.lr);
      read(s, "beta1", c.sweep.adam.beta1);
      read(s, "beta2", c.sweep.adam.beta2);
      read(s, "eps", c.sweep.adam.eps);
      read(s, "seed", c.sweep.seed);
      read(s, "check_cache", c.sweep.check_cache);
    }
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      check_keys(g, "grid", {"chi", "xi", "t", "w"});
      read(g, "chi", c.grid_chi);
      read(g, "xi", c.grid_xi);
      read(g, "t", c.grid_t);
      read(g, "w", c.grid_w);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a field of the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::vector<Cell> expand_grid(const ExperimentConfig& cfg) {
  const std::vector<std::size_t> chis = cfg.grid_chi.empty() ? std::vector{cfg.chi} : cfg.grid_chi;
  const std::vector<std::size_t> xis = cfg.grid_xi.empty() ? std::vector{cfg.xi} : cfg.grid_xi;
  std::vector<LossConfig> losses;
  for (double t : cfg.grid_t) {
    LossConfig l = LossConfig::threshold(t, cfg.loss.lambda).with_kind(cfg.loss.kind);
    losses.push_back(l);
  }
  for (double w : cfg.grid_w) losses.push_back(LossConfig::weight(w, cfg.loss.lambda).with_kind(cfg.loss.kind));
  if (losses.empty()) losses.push_back(cfg.loss);
  std::vector<Cell> cells;
  for (auto chi : chis)
    for (auto xi : xis)
      for (const auto& loss : losses) cells.push_back({cells.size(), chi, xi, loss});
  return cells;
}

CellResult run_cell(const ExperimentConfig& cfg, const Cell& cell) {
  CellResult result;
  result.cell = cell;
  const auto start = std::chrono::steady_clock::now();
  try {
    Dataset data;
    if (cfg.dataset.kind == "iris") data = load_iris(cfg.dataset.path);
    else if (cfg.dataset.kind == "mnist")
      data = load_mnist(cfg.dataset.images, cfg.dataset.labels, cfg.dataset.classes, cfg.dataset.limit);
    else
      data = make_synthetic(cfg.dataset.samples, cfg.dataset.features, cfg.dataset.num_classes,
                            cfg.dataset.seed);
    const Split split = stratified_split(data.labels, cfg.train_fraction, cfg.split_seed);
    std::optional<MinMaxScaler> scaler;
    if (cfg.dataset.kind != "mnist") scaler = MinMaxScaler::fit(data, split.train);
    std::size_t out_dim = 1;
    for (auto o : cfg.output_dims) out_dim *= o;
    const auto train_set = make_samples(data, split.train, scaler ? &*scaler : nullptr, out_dim);
    const auto test_set = make_samples(data, split.test, scaler ? &*scaler : nullptr, out_dim);
    const std::size_t n = data.num_features();
    HtnModel model = cfg.init == "data"
                         ? init_from_data(train_set, cell.chi, cell.xi, cfg.output_dims, cfg.model_seed)
                         : HtnModel::random(n, cell.chi, cell.xi, cfg.output_dims, cfg.model_seed);
    result.report = train(model, train_set, test_set, cell.loss, cfg.sweep, data.num_classes());
  } catch (const std::exception& e) {
    result.error = e.what();
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string cell_file_name(const Cell& cell) {
  std::string name = "cell_" + std::string(3 - std::min<std::size_t>(3, std::to_string(cell.index).size()), '0') +
                     std::to_string(cell.index) + "_chi" + std::to_string(cell.chi) + "_xi" +
                     std::to_string(cell.xi);
  const std::string tw = t_or_w(cell.loss);
  if (!tw.empty()) name += (cell.loss.norm == Normalization::Threshold ? "_t" : "_w") + tw;
  return name + ".json";
}

std::string cell_record_json(const ExperimentConfig& cfg, const CellResult& r) {
  json j;
  j["name"] = cfg.name;
  j["cell"] = {{"index", r.cell.index},
               {"chi", r.cell.chi},
               {"xi", r.cell.xi},
               {"normalization", norm_name(r.cell.loss.norm)},
               {"t", r.cell.loss.t},
               {"w", r.cell.loss.w},
               {"lambda", r.cell.loss.lambda},
               {"loss_kind", r.cell.loss.kind == LossKind::MSE ? "mse" : "cross_entropy"}};
  j["config"] = {{"dataset", cfg.dataset.kind},
                 {"train_fraction", cfg.train_fraction},
                 {"split_seed", cfg.split_seed},
                 {"output_dims", cfg.output_dims},
                 {"init", cfg.init},
                 {"model_seed", cfg.model_seed},
                 {"sweep",
                  {{"n_sweeps", cfg.sweep.n_sweeps},
                   {"adam_steps_per_site", cfg.sweep.adam_steps_per_site},
                   {"lr", cfg.sweep.adam.lr},
                   {"beta1", cfg.sweep.adam.beta1},
                   {"beta2", cfg.sweep.adam.beta2},
                   {"eps", cfg.sweep.adam.eps},
                   {"seed", cfg.sweep.seed}}}};
  if (!r.report) {
    j["status"] = "error";
    j["error"] = r.error;
    return j.dump(2) + "\n";
  }
  j["status"] = "ok";
  const auto& rep = *r.report;
  json series = json::object();
  auto push = [&](const char* key, double v) { series[key].push_back(v); };
  std::vector<SweepRecord> all{rep.initial};
  all.insert(all.end(), rep.sweeps.begin(), rep.sweeps.end());
  for (std::size_t s = 0; s < all.size(); ++s) {
    series["sweep"].push_back(s);
    push("train_loss", all[s].train.loss);
    push("test_loss", all[s].test.loss);
    push("train_accuracy", all[s].train.accuracy);
    push("test_accuracy", all[s].test.accuracy);
    push("train_abstention", all[s].train.abstention);
    push("test_abstention", all[s].test.abstention);
    push("train_retained_trace", all[s].train.retained_trace);
    push("test_retained_trace", all[s].test.retained_trace);
  }
  j["series"] = series;
  json bonds = json::array();
  for (const auto& d : rep.sweep_details) bonds.push_back(d.bond_losses);
  j["bond_losses"] = bonds;
  j["final"] = {{"train", metrics_json(all.back().train)}, {"test", metrics_json(all.back().test)}};
  return j.dump(2) + "\n";
}

std::string aggregate_csv(const std::vector<CellResult>& cells) {
  std::ostringstream os;
  os << "chi,xi,t_or_w,split,final_loss,final_accuracy,abstention,retained_trace,"
        "test_loss,test_accuracy,test_abstention,test_retained_trace,error\n";
  for (const auto& r : cells) {
    os << r.cell.chi << ',' << r.cell.xi << ',' << t_or_w(r.cell.loss) << ",train,";
    if (r.report) {
      const auto& fin = r.report->sweeps.empty() ? r.report->initial : r.report->sweeps.back();
      os << fmt(fin.train.loss) << ',' << fmt(fin.train.accuracy) << ',' << fmt(fin.train.abstention)
         << ',' << fmt(fin.train.retained_trace) << ',' << fmt(fin.test.loss) << ','
         << fmt(fin.test.accuracy) << ',' << fmt(fin.test.abstention) << ','
         << fmt(fin.test.retained_trace) << ",\n";
    } else {
      std::string err = r.error;
      for (auto& ch : err)
        if (ch == '"' || ch == '\n' || ch == '\r') ch = '\'';
      os << ",,,,,,,,\"" << err << "\"\n";
    }
  }
  return os.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                          std::size_t threads) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const auto cells = expand_grid(cfg);
  RunSummary summary;
  summary.cells.resize(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      summary.cells[i] = run_cell(cfg, cells[i]);
      try {
        write_file_atomic(out_dir / cell_file_name(cells[i]), cell_record_json(cfg, summary.cells[i]));
      } catch (...) {
        std::lock_guard lock(io);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(threads, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  summary.csv_path = out_dir / "aggregate.csv";
  write_file_atomic(summary.csv_path, aggregate_csv(summary.cells));
  json timing;
  double total = 0.0;
  for (const auto& r : summary.cells) {
    timing["cells"].push_back({{"file", cell_file_name(r.cell)}, {"seconds", r.seconds}});
    total += r.seconds;
  }
  timing["total_seconds"] = total;
  write_file_atomic(out_dir / "timing.json", timing.dump(2) + "\n");
  return summary;
}

}  // namespace htn::cli
