// Command-line driver: training, evaluation, format sweeps, diagnostics
// export and energy reports.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "qmann/diag.hpp"
#include "qmann/energy.hpp"
#include "qmann/model.hpp"
#include "qmann/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunSpec {
  std::string task = "synthetic:single-fact";
  std::string mode = "float";  // float|fixed
  std::string qformat = "Q5.2";
  std::string param_format;  // optional overrides of --qformat
  std::string act_format;
  std::string mem_format;
  std::string act = "fixed";  // fixed|binary
  std::string similarity = "dot";
  std::string rounding = "nearest";  // nearest|stochastic (seeded)
  int alpha = -3;
  bool mq = false;
  bool es = false;
  std::size_t patience = 10;
  double min_delta = 0.0;
  std::uint64_t seed = 0;
  std::size_t epochs = 100;
  std::size_t batch = 32;
  double lr = 0.3;
  double grad_clip = 40.0;
  std::size_t embed_dim = 60;
  std::size_t slots = 50;
  std::size_t hops = 3;
  double val_frac = 0.1;
  std::size_t stories = 500;
  std::size_t test_stories = 200;
  std::size_t story_len = 0;
  std::size_t entities = 0;
  std::string babi_dir;
  std::string out_dir;

  qmann::TrainConfig train_config() const {
    qmann::TrainConfig cfg;
    cfg.embed_dim = embed_dim;
    cfg.slots = slots;
    cfg.hops = hops;
    cfg.learning_rate = lr;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.seed = seed;
    cfg.grad_clip = grad_clip;
    cfg.early_stop = {es, patience, min_delta};
    cfg.quant.arithmetic =
        mode == "fixed" ? qmann::Arithmetic::Fixed : qmann::Arithmetic::Float;
    const qmann::QFormat base = qmann::parse_qformat(qformat);
    cfg.quant.param_fmt =
        param_format.empty() ? base : qmann::parse_qformat(param_format);
    cfg.quant.act_fmt =
        act_format.empty() ? base : qmann::parse_qformat(act_format);
    cfg.quant.mem_fmt =
        mem_format.empty() ? base : qmann::parse_qformat(mem_format);
    cfg.quant.activation = act == "binary" ? qmann::Activation::Binary
                                           : qmann::Activation::Fixed;
    cfg.quant.similarity = qmann::parse_similarity(similarity);
    cfg.quant.hamming_alpha = alpha;
    cfg.quant.mq = mq;
    cfg.rounding = rounding == "stochastic" ? qmann::Rounding::Stochastic
                                            : qmann::Rounding::NearestEven;
    return cfg;
  }

  json to_json() const {
    return json{{"task", task},
                {"mode", mode},
                {"qformat", qformat},
                {"param_format", param_format},
                {"act_format", act_format},
                {"mem_format", mem_format},
                {"act", act},
                {"similarity", similarity},
                {"rounding", rounding},
                {"alpha", alpha},
                {"mq", mq},
                {"es", es},
                {"patience", patience},
                {"min_delta", min_delta},
                {"seed", seed},
                {"epochs", epochs},
                {"batch", batch},
                {"lr", lr},
                {"grad_clip", grad_clip},
                {"embed_dim", embed_dim},
                {"slots", slots},
                {"hops", hops},
                {"val_frac", val_frac},
                {"stories", stories},
                {"test_stories", test_stories},
                {"story_len", story_len},
                {"entities", entities},
                {"babi_dir", babi_dir},
                {"tool_version", "qmann 0.1.0"}};
  }
};

std::string babi_dir_or_env(const RunSpec& spec) {
  if (!spec.babi_dir.empty()) return spec.babi_dir;
  if (const char* env = std::getenv("QMANN_BABI_DIR")) return env;
  return {};
}

qmann::Dataset load_task(const RunSpec& spec) {
  const auto colon = spec.task.find(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument(
        "task must be synthetic:<kind> or babi:<number>");
  }
  const std::string family = spec.task.substr(0, colon);
  const std::string which = spec.task.substr(colon + 1);
  if (family == "synthetic") {
    qmann::SyntheticSpec s;
    s.task = qmann::parse_synthetic_task(which);
    s.n_train = spec.stories;
    s.n_test = spec.test_stories;
    s.seed = spec.seed;
    s.story_len = spec.story_len;
    s.n_entities = spec.entities;
    qmann::Dataset data = qmann::gen_synthetic(s);
    qmann::split_validation(data, spec.val_frac, spec.seed);
    return data;
  }
  if (family == "babi") {
    const std::string dir = babi_dir_or_env(spec);
    if (dir.empty()) {
      throw std::runtime_error(
          "babi tasks need --babi-dir or QMANN_BABI_DIR");
    }
    return qmann::load_babi_task(dir, std::stoi(which), spec.val_frac,
                                 spec.seed, spec.slots);
  }
  throw std::invalid_argument("unknown task family \"" + family + "\"");
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_run_artifacts(const RunSpec& spec, const qmann::TrainResult& result,
                         const qmann::TrainConfig& cfg,
                         const qmann::Dataset& data) {
  const fs::path dir(spec.out_dir);
  fs::create_directories(dir);
  write_file(dir / "config.json", spec.to_json().dump(2) + "\n");
  // JSON-lines cache of the splits the run actually saw
  for (const auto& [name, stories] :
       {std::pair<const char*, const std::vector<qmann::Story>*>{
            "train.jsonl", &data.train},
        {"validation.jsonl", &data.validation},
        {"test.jsonl", &data.test}}) {
    std::ofstream out(dir / name, std::ios::binary);
    qmann::write_jsonl(out, *stories);
  }
  write_file(dir / "checkpoint.json",
             qmann::checkpoint_to_json(result.model_cfg, cfg.quant,
                                       result.params));
  write_file(dir / "metrics.jsonl", result.metrics.to_jsonl());
  write_file(dir / "metrics.json", result.metrics.to_json() + "\n");
  write_file(dir / "histograms.csv",
             qmann::run_histograms_to_csv(result.metrics));
  write_file(dir / "curves.csv", qmann::curves_to_csv(result.metrics));
  write_file(dir / "overflow.csv",
             qmann::overflow_trace_csv(result.metrics));
  const auto energy = qmann::EnergyModel::reference();
  write_file(dir / "energy.json",
             energy.report_json(result.metrics.inference_ops) + "\n");
}

int cmd_train(const RunSpec& spec) {
  const qmann::TrainConfig cfg = spec.train_config();
  const qmann::Dataset data = load_task(spec);
  const qmann::TrainResult result = qmann::train(data, cfg);
  if (!spec.out_dir.empty()) write_run_artifacts(spec, result, cfg, data);
  const auto& m = result.metrics;
  std::cout << "train_error: " << m.final_train_error << "%\n";
  if (m.final_validation_error >= 0.0) {
    std::cout << "validation_error: " << m.final_validation_error << "%\n";
  }
  if (m.final_test_error >= 0.0) {
    std::cout << "test_error: " << m.final_test_error << "%\n";
  }
  std::cout << "epochs_run: " << m.epochs.size()
            << (m.early_stopped ? " (early stopped)" : "") << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const RunSpec& spec) {
  qmann::MannConfig cfg;
  qmann::QuantSpec quant;
  qmann::MannParams params;
  qmann::checkpoint_from_json(read_file(checkpoint_path), cfg, quant, params);
  const qmann::Dataset data = load_task(spec);
  if (data.vocab.size() != cfg.input_dim) {
    throw std::runtime_error(
        "checkpoint input dimension does not match the dataset vocabulary");
  }
  const auto res = qmann::evaluate_stories(params, cfg, quant,
                                           data.test.empty() ? data.train
                                                             : data.test,
                                           data.vocab);
  std::cout << "test_error: " << res.error_percent << "%\n";
  std::cout << "questions: " << res.questions << "\n";
  std::cout << "similarity_overflows: " << res.sim_overflows << "\n";
  return 0;
}

struct SweepCell {
  std::string task;
  std::string format;
  std::uint64_t seed = 0;
  double test_error = 0.0;
  std::uint64_t sim_overflows = 0;
  bool failed = false;
  std::string error;
};

int cmd_sweep(const RunSpec& base, const std::vector<std::string>& tasks,
              const std::vector<std::string>& formats, std::size_t repeats,
              std::size_t jobs) {
  std::vector<SweepCell> cells;
  for (const auto& task : tasks) {
    for (const auto& format : formats) {
      for (std::uint64_t s = 0; s < repeats; ++s) {
        SweepCell cell;
        cell.task = task;
        cell.format = format;
        cell.seed = s;
        cells.push_back(std::move(cell));
      }
    }
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      SweepCell& cell = cells[i];
      try {
        RunSpec spec = base;
        spec.task = cell.task;
        spec.qformat = cell.format;
        spec.seed = cell.seed;
        spec.out_dir.clear();
        const qmann::Dataset data = load_task(spec);
        const qmann::TrainResult result =
            qmann::train(data, spec.train_config());
        cell.test_error = result.metrics.final_test_error;
        std::uint64_t of = 0;
        for (const auto& em : result.metrics.epochs) {
          of += em.overflow_similarity;
        }
        cell.sim_overflows = of;
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
    }
  };
  const std::size_t n_threads =
      std::max<std::size_t>(1, std::min(jobs, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  // Summaries: per (task, format) best/mean over seeds, then the
  // across-task averages of both.
  json rows = json::array();
  std::cout << "task,format,best,mean,avg_sim_overflows\n";
  std::map<std::string, std::pair<double, double>> per_format_sums;
  std::map<std::string, std::size_t> per_format_n;
  for (const auto& task : tasks) {
    for (const auto& format : formats) {
      double best = std::numeric_limits<double>::infinity();
      double sum = 0.0, ofsum = 0.0;
      std::size_t n = 0;
      for (const auto& cell : cells) {
        if (cell.task != task || cell.format != format || cell.failed) {
          continue;
        }
        best = std::min(best, cell.test_error);
        sum += cell.test_error;
        ofsum += static_cast<double>(cell.sim_overflows);
        ++n;
      }
      if (n == 0) continue;
      const double mean = sum / static_cast<double>(n);
      std::cout << task << ',' << format << ',' << best << ',' << mean << ','
                << ofsum / static_cast<double>(n) << "\n";
      rows.push_back(json{{"task", task},
                          {"format", format},
                          {"best", best},
                          {"mean", mean},
                          {"avg_sim_overflows", ofsum / static_cast<double>(n)},
                          {"repeats", n}});
      per_format_sums[format].first += best;
      per_format_sums[format].second += mean;
      per_format_n[format] += 1;
    }
  }
  json summary = json::array();
  for (const auto& [format, sums] : per_format_sums) {
    const double nf = static_cast<double>(per_format_n[format]);
    std::cout << "summary," << format << ",avg_of_best=" << sums.first / nf
              << ",avg_of_mean=" << sums.second / nf << "\n";
    summary.push_back(json{{"format", format},
                           {"avg_of_best", sums.first / nf},
                           {"avg_of_mean", sums.second / nf}});
  }
  bool any_failed = false;
  for (const auto& cell : cells) {
    if (cell.failed) {
      any_failed = true;
      std::cerr << "cell " << cell.task << "/" << cell.format << "/seed"
                << cell.seed << " failed: " << cell.error << "\n";
    }
  }
  if (!base.out_dir.empty()) {
    fs::create_directories(base.out_dir);
    write_file(fs::path(base.out_dir) / "sweep.json",
               json{{"base_config", base.to_json()},
                    {"tasks", tasks},
                    {"formats", formats},
                    {"repeats", repeats},
                    {"cells", rows},
                    {"summary", summary}}
                       .dump(2) +
                   "\n");
  }
  return any_failed ? 1 : 0;
}

int cmd_diag(const std::string& run_dir) {
  const fs::path dir(run_dir);
  const std::string metrics = read_file(dir / "metrics.jsonl");
  std::istringstream in(metrics);
  std::string line;
  std::cout << "epoch,train_err,val_err,sim_overflow,sim_interdecile\n";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    std::cout << j.at("epoch").get<std::size_t>() << ','
              << j.at("train_err").get<double>() << ',';
    if (j.contains("val_err")) {
      std::cout << j.at("val_err").get<double>();
    } else {
      std::cout << "-";
    }
    std::cout << ',' << j.at("overflow").at("similarity").get<std::uint64_t>()
              << ',' << j.at("sim_interdecile").get<double>() << "\n";
  }
  return 0;
}

int cmd_energy_table() {
  const auto m = qmann::EnergyModel::reference();
  std::cout << "type,op,bits,pj,gain_vs_float_mul32\n";
  const struct {
    const char* type;
    const char* op;
    int bits;
    double pj;
  } rows[] = {
      {"fixed", "add", 8, m.fixed_add8},   {"fixed", "add", 32, m.fixed_add32},
      {"fixed", "mult", 8, m.fixed_mul8},  {"fixed", "mult", 32, m.fixed_mul32},
      {"float", "add", 16, m.float_add16}, {"float", "add", 32, m.float_add32},
      {"float", "mult", 16, m.float_mul16}, {"float", "mult", 32, m.float_mul32},
  };
  for (const auto& r : rows) {
    std::cout << r.type << ',' << r.op << ',' << r.bits << ',' << r.pj << ','
              << qmann::round_to_tenth(m.gain_vs_float_mul32(r.pj)) << "\n";
  }
  return 0;
}

qmann::OpCounts ops_from_energy_json(const fs::path& path) {
  const json j = json::parse(read_file(path));
  const json& c = j.at("counts");
  qmann::OpCounts ops;
  ops.fixed_add8 = c.at("fixed_add8").get<std::uint64_t>();
  ops.fixed_add32 = c.at("fixed_add32").get<std::uint64_t>();
  ops.fixed_mul8 = c.at("fixed_mul8").get<std::uint64_t>();
  ops.fixed_mul32 = c.at("fixed_mul32").get<std::uint64_t>();
  ops.float_add16 = c.at("float_add16").get<std::uint64_t>();
  ops.float_add32 = c.at("float_add32").get<std::uint64_t>();
  ops.float_mul16 = c.at("float_mul16").get<std::uint64_t>();
  ops.float_mul32 = c.at("float_mul32").get<std::uint64_t>();
  return ops;
}

int cmd_energy(const std::string& run_dir, const std::string& baseline_dir) {
  const auto model = qmann::EnergyModel::reference();
  const qmann::OpCounts run =
      ops_from_energy_json(fs::path(run_dir) / "energy.json");
  if (baseline_dir.empty()) {
    std::cout << model.report_json(run) << "\n";
    return 0;
  }
  const qmann::OpCounts base =
      ops_from_energy_json(fs::path(baseline_dir) / "energy.json");
  std::cout << model.report_json(run, &base) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantized memory-augmented network trainer"};
  app.require_subcommand(1);

  RunSpec spec;
  auto add_common = [&spec](CLI::App* cmd) {
    cmd->add_option("--task", spec.task,
                    "synthetic:{single-fact,two-fact,wide-similarity} or "
                    "babi:<n>");
    cmd->add_option("--mode", spec.mode, "float|fixed")
        ->check(CLI::IsMember({"float", "fixed"}));
    cmd->add_option("--qformat", spec.qformat, "Q format, e.g. Q5.2");
    cmd->add_option("--param-format", spec.param_format);
    cmd->add_option("--act-format", spec.act_format);
    cmd->add_option("--mem-format", spec.mem_format);
    cmd->add_option("--act", spec.act, "fixed|binary")
        ->check(CLI::IsMember({"fixed", "binary"}));
    cmd->add_option("--similarity", spec.similarity, "dot|hamming")
        ->check(CLI::IsMember({"dot", "hamming"}));
    cmd->add_option("--rounding", spec.rounding,
                    "quantizer rounding (stochastic is seeded by --seed)")
        ->check(CLI::IsMember({"nearest", "stochastic"}));
    cmd->add_option("--alpha", spec.alpha, "bounded-similarity weight constant");
    cmd->add_flag("--mq", spec.mq, "per-hop format perturbation");
    cmd->add_flag("--es", spec.es, "early stopping on validation error");
    cmd->add_option("--patience", spec.patience);
    cmd->add_option("--min-delta", spec.min_delta);
    cmd->add_option("--seed", spec.seed);
    cmd->add_option("--epochs", spec.epochs);
    cmd->add_option("--batch", spec.batch);
    cmd->add_option("--lr", spec.lr);
    cmd->add_option("--grad-clip", spec.grad_clip);
    cmd->add_option("--embed-dim", spec.embed_dim);
    cmd->add_option("--slots", spec.slots);
    cmd->add_option("--hops", spec.hops);
    cmd->add_option("--val-frac", spec.val_frac);
    cmd->add_option("--stories", spec.stories, "synthetic training stories");
    cmd->add_option("--test-stories", spec.test_stories);
    cmd->add_option("--story-len", spec.story_len);
    cmd->add_option("--entities", spec.entities);
    cmd->add_option("--babi-dir", spec.babi_dir,
                    "bAbI data directory (or QMANN_BABI_DIR)");
    cmd->add_option("--out", spec.out_dir, "artifact output directory");
  };

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "checkpoint.json path")
      ->required();
  add_common(eval);

  CLI::App* sweep = app.add_subcommand("sweep", "format/seed sweep");
  std::string tasks_flag;
  std::string formats_flag = "Q5.2";
  std::size_t repeats = 3;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  sweep->add_option("--tasks", tasks_flag, "comma-separated task list");
  sweep->add_option("--qformats", formats_flag, "comma-separated Q formats");
  sweep->add_option("--repeats", repeats, "seeds per cell (0..n-1)");
  sweep->add_option("--jobs", jobs, "worker threads");
  add_common(sweep);

  CLI::App* diag = app.add_subcommand("diag", "summarize a run directory");
  std::string run_dir;
  diag->add_option("--run", run_dir, "run directory")->required();

  CLI::App* energy = app.add_subcommand("energy", "energy report");
  std::string energy_run, energy_baseline;
  bool energy_table = false;
  energy->add_option("--run", energy_run, "run directory");
  energy->add_option("--baseline", energy_baseline,
                     "baseline run directory for the gain column");
  energy->add_flag("--table", energy_table, "print the reference table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(spec);
    if (eval->parsed()) return cmd_eval(checkpoint, spec);
    if (sweep->parsed()) {
      auto split_list = [](const std::string& s) {
        std::vector<std::string> out;
        std::istringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
          if (!item.empty()) out.push_back(item);
        }
        return out;
      };
      std::vector<std::string> tasks = split_list(tasks_flag);
      if (tasks.empty()) tasks.push_back(spec.task);
      return cmd_sweep(spec, tasks, split_list(formats_flag), repeats, jobs);
    }
    if (diag->parsed()) return cmd_diag(run_dir);
    if (energy->parsed()) {
      if (energy_table || energy_run.empty()) return cmd_energy_table();
      return cmd_energy(energy_run, energy_baseline);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
