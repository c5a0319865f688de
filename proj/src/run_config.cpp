#include "fsv/run_config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "fsv/errors.hpp"
#include "fsv/text_io.hpp"

namespace fsv::cli {
namespace {

using K = KeyType;

std::vector<KeySpec> make_registry() {
  return {
      {"seed", K::kUInt, "0", "master seed (falls back to $FSV_SEED)"},
      {"threads", K::kUInt, "0", "worker cap for eval and sweep (0 = hardware threads)"},
      {"data", K::kString, "", "dataset bundle directory"},
      {"out", K::kString, "out", "output directory"},
      {"base_checkpoint", K::kString, "", "base classifier file (trained per config when empty)"},
      {"gan_checkpoint", K::kString, "", "generator checkpoint (trained per config when empty)"},
      {"pseudo_set", K::kString, "", "pseudo-labeled clips added to generator training"},

      {"synth_base_classes", K::kInt, "64", "synthetic base classes"},
      {"synth_val_classes", K::kInt, "12", "synthetic validation classes"},
      {"synth_novel_classes", K::kInt, "24", "synthetic novel classes"},
      {"synth_clips_per_video", K::kInt, "10", "clips per synthetic video"},
      {"synth_base_train_videos", K::kInt, "110", "training videos per base class"},
      {"synth_base_test_videos", K::kInt, "20", "held-out videos per base class"},
      {"synth_videos_per_class", K::kInt, "40", "videos per validation or novel class"},
      {"synth_dv", K::kInt, "32", "feature dimension"},
      {"synth_dt", K::kInt, "32", "tag embedding dimension"},
      {"synth_dy", K::kInt, "32", "class embedding dimension"},
      {"synth_sigma_sep", K::kDouble, "6", "radius of the class-mean sphere"},
      {"synth_sigma_in", K::kDouble, "1", "within-class noise std"},
      {"synth_video_share", K::kDouble, "0.75", "share of within-class variance common to a video"},
      {"synth_semantic_noise", K::kDouble, "0.05", "noise added to class embeddings"},
      {"synth_corpus_size", K::kInt, "2400", "tagged corpus videos"},
      {"synth_distractor_fraction", K::kDouble, "0.9", "fraction of corpus videos that are distractors"},
      {"synth_tag_noise", K::kDouble, "0", "chance a planted video carries a wrong class tag"},
      {"synth_noise_words", K::kInt, "200", "non-class words in the tag vocabulary"},

      {"classifier_optimizer", K::kString, "sgd", "classifier optimizer (sgd or adam)"},
      {"classifier_init_scale", K::kDouble, "0.01", "std of the classifier weight init"},
      {"base_epochs", K::kInt, "10", "base head epochs"},
      {"base_lr", K::kDouble, "0.01", "base head learning rate"},
      {"base_batch_size", K::kInt, "64", "base head batch size"},
      {"base_val_videos", K::kInt, "10", "held-out videos per base class for stopping (0 runs all epochs)"},
      {"base_min_delta", K::kDouble, "0.002", "minimum held-out accuracy gain to keep training the base head"},
      {"novel_epochs", K::kInt, "10", "novel head epochs"},
      {"novel_lr", K::kDouble, "0.01", "novel head learning rate"},
      {"novel_batch_size", K::kInt, "64", "novel head batch size"},

      {"gan_epochs", K::kInt, "2", "generator training epochs"},
      {"gan_batch_size", K::kInt, "64", "generator batch size"},
      {"gan_lambda", K::kDouble, "10", "gradient penalty weight"},
      {"gan_n_critic", K::kInt, "5", "critic steps per generator step"},
      {"gan_lr", K::kDouble, "0.0001", "Adam learning rate of both networks"},
      {"gan_beta1", K::kDouble, "0.5", "Adam beta1 of both networks"},
      {"gan_beta2", K::kDouble, "0.9", "Adam beta2 of both networks"},
      {"gan_balanced", K::kBool, "false", "class-balanced generator batches"},

      {"n_way", K::kInt, "5", "novel classes per episode"},
      {"k_shot", K::kInt, "1", "support videos per class"},
      {"queries_per_class", K::kInt, "15", "query videos per novel class"},
      {"base_queries_per_class", K::kInt, "15", "query videos per base class (generalized)"},
      {"episodes", K::kInt, "500", "episodes"},
      {"clips_per_query", K::kInt, "10", "clips scored per query video"},
      {"gfsv", K::kBool, "false", "generalized setting (base and novel label space)"},
      {"use_retrieval", K::kBool, "false", "add retrieved pseudo-labeled clips"},
      {"use_denoising", K::kBool, "false", "half trusted, half pseudo batches"},
      {"use_best_clips", K::kBool, "true", "rerank retrieved clips against the prototype"},
      {"use_gan", K::kBool, "false", "add generated features"},
      {"generated_per_class", K::kInt, "300", "generated features per novel class"},
      {"retrieval_n", K::kInt, "20", "candidate videos per class"},
      {"retrieval_m", K::kInt, "5", "retrieved clips kept per class"},
      {"clips_per_candidate", K::kInt, "15", "clips drawn from each candidate video"},
  };
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return out = true, true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return out = false, true;
  return false;
}

void check_value(const KeySpec& spec, const std::string& value) {
  auto fail = [&](const char* what) {
    throw ConfigError("invalid value '" + value + "' for key '" + spec.name + "': expected " + what);
  };
  const char* b = value.data();
  const char* e = value.data() + value.size();
  switch (spec.type) {
    case K::kInt: {
      long long v;
      auto r = std::from_chars(b, e, v);
      if (r.ec != std::errc() || r.ptr != e) fail("an integer");
      break;
    }
    case K::kUInt: {
      std::uint64_t v;
      auto r = std::from_chars(b, e, v);
      if (r.ec != std::errc() || r.ptr != e) fail("a non-negative integer");
      break;
    }
    case K::kDouble: {
      double v;
      auto r = std::from_chars(b, e, v);
      if (r.ec != std::errc() || r.ptr != e || !std::isfinite(v)) fail("a finite number");
      break;
    }
    case K::kBool: {
      bool v;
      if (!parse_bool(value, v)) fail("true or false");
      break;
    }
    case K::kString:
      break;
  }
}

}  // namespace

const std::vector<KeySpec>& key_registry() {
  static const std::vector<KeySpec> registry = make_registry();
  return registry;
}

const KeySpec* find_key(const std::string& name) {
  for (const auto& k : key_registry())
    if (k.name == name) return &k;
  return nullptr;
}

RunConfig::RunConfig() {
  for (const auto& k : key_registry()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto* spec = find_key(key);
  if (!spec) throw ConfigError("unknown config key '" + key + "'");
  check_value(*spec, value);
  values_[key] = value;
  explicit_[key] = true;
}

void RunConfig::merge_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = io::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source + ":" + std::to_string(n) + ": expected 'key = value'");
    const std::string key(io::trim(body.substr(0, eq)));
    const std::string value(io::trim(body.substr(eq + 1)));
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " not found");
  merge_text(io::read_file(path), path.string());
}

const std::string& RunConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
  const auto& v = raw(key);
  long long out = 0;
  std::from_chars(v.data(), v.data() + v.size(), out);
  return out;
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  const auto& v = raw(key);
  std::uint64_t out = 0;
  std::from_chars(v.data(), v.data() + v.size(), out);
  return out;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& v = raw(key);
  double out = 0.0;
  std::from_chars(v.data(), v.data() + v.size(), out);
  return out;
}

bool RunConfig::get_bool(const std::string& key) const {
  bool out = false;
  parse_bool(raw(key), out);
  return out;
}

std::string RunConfig::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : values_)
    if (k != "out" && k != "threads") out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const { return io::hex64(io::fnv1a64(canonical_text())); }

namespace {

int to_int(long long v, const char* key) {
  if (v < -2147483647LL || v > 2147483647LL) throw ConfigError(std::string("value of '") + key + "' out of range");
  return static_cast<int>(v);
}

}  // namespace

synth::SynthConfig RunConfig::synth_config() const {
  synth::SynthConfig c;
  c.base_classes = to_int(get_int("synth_base_classes"), "synth_base_classes");
  c.val_classes = to_int(get_int("synth_val_classes"), "synth_val_classes");
  c.novel_classes = to_int(get_int("synth_novel_classes"), "synth_novel_classes");
  c.clips_per_video = to_int(get_int("synth_clips_per_video"), "synth_clips_per_video");
  c.base_train_videos_per_class = to_int(get_int("synth_base_train_videos"), "synth_base_train_videos");
  c.base_test_videos_per_class = to_int(get_int("synth_base_test_videos"), "synth_base_test_videos");
  c.videos_per_class = to_int(get_int("synth_videos_per_class"), "synth_videos_per_class");
  c.dv = to_int(get_int("synth_dv"), "synth_dv");
  c.dt = to_int(get_int("synth_dt"), "synth_dt");
  c.dy = to_int(get_int("synth_dy"), "synth_dy");
  c.sigma_sep = get_double("synth_sigma_sep");
  c.sigma_in = get_double("synth_sigma_in");
  c.video_share = get_double("synth_video_share");
  c.semantic_noise = get_double("synth_semantic_noise");
  c.corpus_size = to_int(get_int("synth_corpus_size"), "synth_corpus_size");
  c.distractor_fraction = get_double("synth_distractor_fraction");
  c.tag_noise = get_double("synth_tag_noise");
  c.noise_words = to_int(get_int("synth_noise_words"), "synth_noise_words");
  c.seed = get_uint("seed");
  c.validate();
  return c;
}

namespace {

clf::TrainConfig head_config(const RunConfig& rc, const std::string& prefix) {
  clf::TrainConfig c;
  c.epochs = to_int(rc.get_int(prefix + "_epochs"), "epochs");
  c.learning_rate = rc.get_double(prefix + "_lr");
  c.batch_size = to_int(rc.get_int(prefix + "_batch_size"), "batch_size");
  try {
    c.optimizer = nk::parse_optimizer(rc.get_string("classifier_optimizer"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("key 'classifier_optimizer': ") + e.what());
  }
  c.init_scale = rc.get_double("classifier_init_scale");
  c.validate(false);
  return c;
}

}  // namespace

clf::TrainConfig RunConfig::base_train_config() const { return head_config(*this, "base"); }

pipeline::BaseStopping RunConfig::base_stopping() const {
  pipeline::BaseStopping s;
  s.val_videos_per_class = to_int(get_int("base_val_videos"), "base_val_videos");
  s.min_delta = get_double("base_min_delta");
  s.validate();
  return s;
}

clf::TrainConfig RunConfig::novel_train_config() const {
  auto c = head_config(*this, "novel");
  c.validate(get_bool("use_denoising") && get_bool("use_retrieval"));
  return c;
}

gan::GanTrainConfig RunConfig::gan_config() const {
  gan::GanTrainConfig c;
  c.epochs = to_int(get_int("gan_epochs"), "gan_epochs");
  c.batch_size = to_int(get_int("gan_batch_size"), "gan_batch_size");
  c.lambda = get_double("gan_lambda");
  c.n_critic = to_int(get_int("gan_n_critic"), "gan_n_critic");
  c.balanced = get_bool("gan_balanced");
  for (auto* opt : {&c.generator_opt, &c.critic_opt}) {
    opt->kind = nk::OptimizerKind::kAdam;
    opt->learning_rate = get_double("gan_lr");
    opt->beta1 = get_double("gan_beta1");
    opt->beta2 = get_double("gan_beta2");
  }
  c.seed = get_uint("seed");
  c.validate();
  return c;
}

eval::EpisodeConfig RunConfig::episode_config() const {
  eval::EpisodeConfig c;
  c.n_way = to_int(get_int("n_way"), "n_way");
  c.k_shot = to_int(get_int("k_shot"), "k_shot");
  c.queries_per_class = to_int(get_int("queries_per_class"), "queries_per_class");
  c.base_queries_per_class = to_int(get_int("base_queries_per_class"), "base_queries_per_class");
  c.episodes = to_int(get_int("episodes"), "episodes");
  c.clips_per_query = to_int(get_int("clips_per_query"), "clips_per_query");
  c.include_base = get_bool("gfsv");
  c.use_retrieval = get_bool("use_retrieval");
  c.use_denoising = get_bool("use_denoising");
  c.use_best_clips = get_bool("use_best_clips");
  c.use_gan = get_bool("use_gan");
  c.generated_per_class = to_int(get_int("generated_per_class"), "generated_per_class");
  const auto n = get_int("retrieval_n"), m = get_int("retrieval_m"), cpc = get_int("clips_per_candidate");
  if (n < 1 || m < 1 || cpc < 1) throw ConfigError("retrieval_n, retrieval_m and clips_per_candidate must be >= 1");
  c.retrieval.candidates = static_cast<std::size_t>(n);
  c.retrieval.clips_per_class = static_cast<std::size_t>(m);
  c.retrieval.clips_per_candidate = static_cast<std::size_t>(cpc);
  c.seed = get_uint("seed");
  return c;
}

}  // namespace fsv::cli
