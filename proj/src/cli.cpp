#include "fsv/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fsv/errors.hpp"
#include "fsv/evaluator.hpp"
#include "fsv/pipeline.hpp"
#include "fsv/run_config.hpp"
#include "fsv/synthbench.hpp"
#include "fsv/text_io.hpp"

namespace fsv::cli {
namespace {

namespace fs = std::filesystem;

std::string flag_name(const std::string& key) {
  std::string out = key;
  for (auto& ch : out)
    if (ch == '_') ch = '-';
  return out;
}

// Options shared by every subcommand: --config plus one flag per config key.
struct CommonOptions {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("--config", opts.config_path, "key = value config file");
  for (const auto& spec : key_registry()) {
    const std::string name = spec.name;
    const std::string help = spec.help + " (default: " +
                             (spec.default_value.empty() ? "none" : spec.default_value) + ")";
    if (spec.type == KeyType::kBool) {
      auto* on = sub->add_flag_function(
          "--" + flag_name(name), [&opts, name](std::int64_t) { opts.overrides.emplace_back(name, "true"); },
          help);
      auto* off = sub->add_flag_function(
          "--no-" + flag_name(name),
          [&opts, name](std::int64_t) { opts.overrides.emplace_back(name, "false"); },
          "disable --" + flag_name(name));
      off->excludes(on);
    } else {
      sub->add_option_function<std::string>(
          "--" + flag_name(name),
          [&opts, name](const std::string& v) { opts.overrides.emplace_back(name, v); }, help);
    }
  }
}

RunConfig build_config(const CommonOptions& opts) {
  RunConfig rc;
  if (!opts.config_path.empty()) rc.merge_file(opts.config_path);
  for (const auto& [k, v] : opts.overrides) rc.set(k, v);
  if (!rc.was_set("seed")) {
    if (const char* env = std::getenv("FSV_SEED")) {
      try {
        rc.set("seed", env);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("FSV_SEED: ") + e.what());
      }
    }
  }
  return rc;
}

class Session {
 public:
  Session(std::string command, const RunConfig& rc, std::ostream& out)
      : command_(std::move(command)), rc_(rc), out_(out) {
    const auto& dir = rc.get_string("out");
    if (dir.empty()) throw ConfigError("key 'out' must name a directory");
    dir_ = dir;
  }

  const RunConfig& config() const { return rc_; }
  std::ostream& log() { return out_; }
  std::uint64_t seed() const { return rc_.get_uint("seed"); }

  unsigned threads() const {
    const auto t = rc_.get_uint("threads");
    if (t > 0) return static_cast<unsigned>(t);
    return std::max(1u, std::thread::hardware_concurrency());
  }

  void write(const std::string& name, const std::string& contents) {
    io::write_file_atomic(dir_ / name, contents);
    artifacts_[name] = io::hex64(io::fnv1a64(contents));
  }

  // Records a file read from outside the run.
  std::string read_input(const std::string& key, const fs::path& path) {
    if (!fs::exists(path))
      throw MissingArtifactError("missing " + key + " artifact: " + path.string());
    auto text = io::read_file(path);
    inputs_[key] = io::hex64(io::fnv1a64(text));
    return text;
  }

  data::Dataset load_data() {
    const auto& dir = rc_.get_string("data");
    if (dir.empty()) throw ConfigError("key 'data' is required for '" + command_ + "'");
    if (!fs::is_directory(dir)) throw MissingArtifactError("missing dataset directory: " + dir);
    const auto paths = data::DatasetPaths::in_directory(dir);
    for (const auto& p : {paths.features, paths.labels, paths.splits})
      if (!fs::exists(p)) throw MissingArtifactError("missing dataset file: " + p.string());
    return data::load_dataset(paths);
  }

  void finish() {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["config_hash"] = rc_.hash();
    j["seed"] = seed();
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : rc_.values()) cfg[k] = v;
    j["config"] = cfg;
    nlohmann::ordered_json in = nlohmann::ordered_json::object();
    for (const auto& [k, v] : inputs_) in[k] = v;
    j["inputs"] = in;
    nlohmann::ordered_json art = nlohmann::ordered_json::object();
    for (const auto& [k, v] : artifacts_) art[k] = v;
    j["artifacts"] = art;
    io::write_file_atomic(dir_ / ("manifest_" + command_ + ".json"), j.dump(1) + "\n");
  }

 private:
  std::string command_;
  RunConfig rc_;
  std::ostream& out_;
  fs::path dir_;
  std::map<std::string, std::string> artifacts_;
  std::map<std::string, std::string> inputs_;
};

ret::RetrievalConfig retrieval_config(const RunConfig& rc) {
  auto r = rc.episode_config().retrieval;
  r.best_clips = rc.get_bool("use_best_clips");
  return r;
}

clf::LinearClassifier obtain_base_head(Session& s, const data::Dataset& ds,
                                       const data::FeatureSpace& space) {
  const auto& rc = s.config();
  const auto& ckpt = rc.get_string("base_checkpoint");
  if (!ckpt.empty()) {
    auto head = clf::parse_classifier(s.read_input("base_checkpoint", ckpt), ckpt);
    if (head.dim() != ds.features.dim())
      throw ValidationError("base checkpoint width differs from the dataset", {ckpt});
    return head;
  }
  pipeline::BaseHeadReport rep;
  auto head = pipeline::train_base_head(ds, space, rc.base_train_config(), s.seed(),
                                        rc.base_stopping(), &rep);
  s.log() << "base head: " << rep.train_videos << " training videos";
  if (rep.best_epoch >= 0)
    s.log() << ", kept epoch " << rep.best_epoch + 1 << " of " << rep.val_accuracy.size()
            << " (held-out accuracy " << rep.val_accuracy[static_cast<std::size_t>(rep.best_epoch)]
            << ")";
  s.log() << "\n";
  return head;
}

ret::PseudoSet obtain_pseudo_set(Session& s, const data::Dataset& ds) {
  const auto& rc = s.config();
  const auto& path = rc.get_string("pseudo_set");
  if (!path.empty()) return ret::parse_pseudo_set(s.read_input("pseudo_set", path), path);
  return pipeline::retrieve_novel(ds, retrieval_config(rc),
                                  static_cast<int>(rc.get_int("k_shot")), s.seed());
}

gan::GanParams obtain_gan(Session& s, const data::Dataset& ds, const data::FeatureSpace& space,
                          gan::GanLog* log) {
  const auto& rc = s.config();
  if (!ds.semantics)
    throw MissingArtifactError(std::string("generation needs ") + data::kClassEmbeddingsFile);
  const auto& ckpt = rc.get_string("gan_checkpoint");
  if (!ckpt.empty()) {
    auto g = gan::parse_gan(s.read_input("gan_checkpoint", ckpt), ckpt);
    if (g.dv != ds.features.dim() || g.dy != ds.semantics->dim())
      throw ValidationError("GAN checkpoint widths differ from the dataset", {ckpt});
    return g;
  }
  std::optional<ret::PseudoSet> pseudo;
  if (rc.get_bool("use_retrieval") || !rc.get_string("pseudo_set").empty())
    pseudo = obtain_pseudo_set(s, ds);
  s.log() << "training generator (" << rc.get_int("gan_epochs") << " epochs"
          << (pseudo ? ", with retrieved clips" : "") << ")\n";
  return pipeline::train_generator(ds, space, rc.gan_config(), pseudo ? &*pseudo : nullptr, log);
}

int cmd_synth(Session& s) {
  const auto bundle = synth::make_synthetic(s.config().synth_config());
  const auto& ds = bundle.dataset;
  s.write(data::kFeaturesFile, data::format_features(ds.features));
  s.write(data::kLabelsFile, data::format_labels(ds.labels));
  s.write(data::kClassesFile, data::format_classes(ds.class_names));
  s.write(data::kSplitsFile, data::format_splits(ds.splits));
  if (ds.tags) s.write(data::kTagsFile, data::format_tags(*ds.tags));
  if (ds.words) s.write(data::kWordEmbeddingsFile, data::format_word_embeddings(*ds.words));
  if (ds.semantics) s.write(data::kClassEmbeddingsFile, data::format_class_embeddings(*ds.semantics));
  s.write(kGroundTruthFile, synth::format_ground_truth(bundle.truth));
  const auto oracle = synth::bayes_oracle(ds, bundle.truth);
  s.log() << "synthetic bundle: " << ds.features.size() << " clips, " << ds.labels.size()
          << " labeled videos; nearest-true-mean accuracy base " << oracle.base << " novel "
          << oracle.novel << "\n";
  return kExitOk;
}

int cmd_train_base(Session& s) {
  const auto ds = s.load_data();
  const auto space = pipeline::fit_space(ds);
  const auto head = obtain_base_head(s, ds, space);
  s.write(kBaseClassifierFile, clf::format_classifier(head));
  return kExitOk;
}

int cmd_retrieve(Session& s) {
  const auto ds = s.load_data();
  const auto set = pipeline::retrieve_novel(ds, retrieval_config(s.config()),
                                            static_cast<int>(s.config().get_int("k_shot")), s.seed());
  s.write(kPseudoSetFile, ret::format_pseudo_set(set));
  std::size_t short_classes = 0;
  for (const auto& e : set.entries) short_classes += e.short_of_quota ? 1 : 0;
  s.log() << "pseudo-labeled clips: " << set.total_clips() << " over " << set.entries.size()
          << " classes (" << short_classes << " short of quota)\n";
  return kExitOk;
}

int cmd_train_gan(Session& s) {
  const auto ds = s.load_data();
  const auto space = pipeline::fit_space(ds);
  gan::GanLog log;
  const auto g = obtain_gan(s, ds, space, &log);
  s.write(kGanFile, gan::format_gan(g));
  s.write(kGanLogFile, gan::format_gan_log(log));
  return kExitOk;
}

// Models shared by every episode of a run.
struct Prepared {
  data::Dataset ds;
  data::FeatureSpace space;
  std::optional<clf::LinearClassifier> base;
  std::optional<gan::GanParams> gan;
  std::optional<ret::TagIndex> index;

  eval::EvalContext context(const RunConfig& rc) const {
    eval::EvalContext ctx;
    ctx.dataset = &ds;
    ctx.space = &space;
    ctx.base = base ? &*base : nullptr;
    ctx.gan = gan ? &*gan : nullptr;
    ctx.tag_index = index ? &*index : nullptr;
    ctx.novel_train = rc.novel_train_config();
    return ctx;
  }
};

void prepare(Session& s, Prepared& p, bool need_base, bool need_gan, bool need_index) {
  p.ds = s.load_data();
  p.space = pipeline::fit_space(p.ds);
  if (need_base) p.base = obtain_base_head(s, p.ds, p.space);
  if (need_index) {
    if (!p.ds.tags) throw MissingArtifactError(std::string("retrieval needs ") + data::kTagsFile);
    if (!p.ds.words)
      throw MissingArtifactError(std::string("retrieval needs ") + data::kWordEmbeddingsFile);
    p.index = ret::build_tag_index(*p.ds.tags, *p.ds.words);
  }
  if (need_gan) p.gan = obtain_gan(s, p.ds, p.space, nullptr);
}

void print_report(std::ostream& out, const eval::EvalReport& r) {
  out << "novel_acc " << r.novel_acc;
  if (r.base_acc) out << " base_acc " << *r.base_acc << " hm " << *r.hm;
  out << " over " << r.episodes.size() << " episodes\n";
}

int cmd_eval(Session& s) {
  const auto& rc = s.config();
  auto ec = rc.episode_config();
  rc.novel_train_config();
  Prepared p;
  prepare(s, p, ec.include_base, ec.use_gan, ec.use_retrieval);
  ec.validate(p.ds.splits.novel.size());
  const auto report = eval::run_evaluation(p.context(rc), ec, s.threads());
  // Paths of outputs and the worker count do not affect the results.
  auto echo = rc.values();
  echo.erase("out");
  echo.erase("threads");
  s.write(kReportJsonFile, eval::format_report_json(report, ec, echo));
  s.write(kEpisodesCsvFile, eval::format_report_csv(report));
  print_report(s.log(), report);
  return kExitOk;
}

int cmd_sweep(Session& s, const std::string& param, const std::vector<std::string>& raw_values) {
  const auto& rc = s.config();
  const auto base_ec = rc.episode_config();
  rc.novel_train_config();
  if (raw_values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<int> values;
  for (const auto& v : raw_values) {
    long long x = 0;
    try {
      x = io::parse_int(v, "--values", 1);
    } catch (const ParseError&) {
      throw ConfigError("invalid sweep value '" + v + "' for " + param);
    }
    const bool ok = param == "generated_count" ? (x >= 1 && x <= 10000) : x >= 1;
    if (!ok || x > 1000000) throw ConfigError("sweep value " + v + " out of range for " + param);
    values.push_back(static_cast<int>(x));
  }

  std::vector<eval::EpisodeConfig> configs;
  for (int v : values) {
    auto ec = base_ec;
    if (param == "retrieved_clips") {
      ec.use_retrieval = true;
      ec.retrieval.clips_per_class = static_cast<std::size_t>(v);
    } else if (param == "generated_count") {
      ec.use_gan = true;
      ec.generated_per_class = v;
    } else {
      ec.n_way = v;
    }
    configs.push_back(ec);
  }

  const bool need_gan = configs.front().use_gan;
  const bool need_index = configs.front().use_retrieval;
  Prepared p;
  prepare(s, p, base_ec.include_base, need_gan, need_index);
  for (const auto& ec : configs) ec.validate(p.ds.splits.novel.size());

  const auto ctx = p.context(rc);
  std::string csv = "param,value,episodes,novel_acc,base_acc,hm\n";
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto r = eval::run_evaluation(ctx, configs[i], s.threads());
    csv += param + "," + std::to_string(values[i]) + "," + std::to_string(r.episodes.size()) + "," +
           io::format_double(r.novel_acc) + "," + (r.base_acc ? io::format_double(*r.base_acc) : "") +
           "," + (r.hm ? io::format_double(*r.hm) : "") + "\n";
    s.log() << param << "=" << values[i] << ": ";
    print_report(s.log(), r);
  }
  s.write(kSweepCsvFile, csv);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot video classification pipeline over precomputed clip features"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  struct Command {
    CLI::App* app;
    CommonOptions opts;
  };
  std::map<std::string, Command> commands;
  const std::vector<std::pair<std::string, std::string>> names{
      {"synth", "write a synthetic dataset bundle"},
      {"train-base", "train the base-class head"},
      {"retrieve", "build the pseudo-labeled set for the novel classes"},
      {"train-gan", "train the feature generator"},
      {"eval", "run episodic evaluation"},
      {"sweep", "evaluate a range of values of one parameter"},
  };
  for (const auto& [name, desc] : names) {
    auto& c = commands[name];
    c.app = app.add_subcommand(name, desc);
    add_common(c.app, c.opts);
  }
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  auto* sweep = commands.at("sweep").app;
  sweep->add_option("--param", sweep_param, "parameter to sweep")
      ->required()
      ->check(CLI::IsMember({"retrieved_clips", "generated_count", "n_way"}));
  sweep->add_option("--values", sweep_values, "comma-separated values")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  std::string chosen;
  for (auto& [name, c] : commands)
    if (c.app->parsed()) chosen = name;

  try {
    const auto rc = build_config(commands.at(chosen).opts);
    Session s(chosen, rc, out);
    int code = kExitOk;
    if (chosen == "synth") code = cmd_synth(s);
    else if (chosen == "train-base") code = cmd_train_base(s);
    else if (chosen == "retrieve") code = cmd_retrieve(s);
    else if (chosen == "train-gan") code = cmd_train_gan(s);
    else if (chosen == "eval") code = cmd_eval(s);
    else code = cmd_sweep(s, sweep_param, sweep_values);
    s.finish();
    return code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingArtifactError& e) {
    err << "missing artifact: " << e.what() << "\n";
    return kExitMissing;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace fsv::cli
