#include "fsv/datastore.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "fsv/errors.hpp"
#include "fsv/text_io.hpp"

namespace fsv::data {
namespace {

const std::vector<std::size_t> kNoRows;
const std::vector<std::string> kNoVideos;

Vector parse_vector(const std::vector<std::string_view>& cols, std::size_t first, Index dim,
                    const std::string& source, std::size_t line) {
  if (cols.size() != first + static_cast<std::size_t>(dim))
    throw ParseError(source, line,
                     "expected " + std::to_string(first + dim) + " columns, got " +
                         std::to_string(cols.size()));
  Vector v(dim);
  for (Index j = 0; j < dim; ++j) v(j) = io::parse_double(cols[first + j], source, line);
  return v;
}

void append_vector(std::string& out, const double* values, Index dim) {
  for (Index j = 0; j < dim; ++j) {
    out += '\t';
    out += io::format_double(values[j]);
  }
}

bool is_blank(const std::string& line) { return io::trim(line).empty(); }

std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// FeatureTable

FeatureTable::FeatureTable(Index dim) : dim_(dim) {}

void FeatureTable::add(const std::string& video_id, int clip_index, const Vector& feature) {
  if (feature.size() != dim_)
    throw ShapeError("feature for " + video_id + "#" + std::to_string(clip_index) + " has " +
                     std::to_string(feature.size()) + " values, expected " +
                     std::to_string(dim_));
  if (!feature.allFinite())
    throw Error("non-finite feature for " + video_id + "#" + std::to_string(clip_index));
  if (clip_index < 0) throw Error("negative clip index for " + video_id);
  auto& rows = by_video_[video_id];
  for (auto r : rows)
    if (keys_[r].clip_index == clip_index)
      throw Error("duplicate clip " + video_id + "#" + std::to_string(clip_index));
  const std::size_t row = keys_.size();
  keys_.push_back({video_id, clip_index});
  values_.insert(values_.end(), feature.data(), feature.data() + dim_);
  auto pos = std::lower_bound(rows.begin(), rows.end(), clip_index,
                              [&](std::size_t r, int c) { return keys_[r].clip_index < c; });
  rows.insert(pos, row);
}

void FeatureTable::canonicalize() {
  std::vector<std::size_t> order(keys_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return keys_[a] < keys_[b]; });
  std::vector<ClipKey> keys;
  std::vector<double> values;
  keys.reserve(keys_.size());
  values.reserve(values_.size());
  for (auto r : order) {
    keys.push_back(keys_[r]);
    values.insert(values.end(), values_.begin() + static_cast<std::ptrdiff_t>(r * dim_),
                  values_.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim_));
  }
  keys_ = std::move(keys);
  values_ = std::move(values);
  by_video_.clear();
  for (std::size_t r = 0; r < keys_.size(); ++r) by_video_[keys_[r].video_id].push_back(r);
}

Eigen::Map<const Vector> FeatureTable::feature(std::size_t row) const {
  return Eigen::Map<const Vector>(values_.data() + row * static_cast<std::size_t>(dim_), dim_);
}

bool FeatureTable::has_video(const std::string& video_id) const {
  return by_video_.count(video_id) != 0;
}

const std::vector<std::size_t>& FeatureTable::rows_of(const std::string& video_id) const {
  auto it = by_video_.find(video_id);
  return it == by_video_.end() ? kNoRows : it->second;
}

std::optional<std::size_t> FeatureTable::find(const std::string& video_id, int clip_index) const {
  for (auto r : rows_of(video_id))
    if (keys_[r].clip_index == clip_index) return r;
  return std::nullopt;
}

std::vector<std::string> FeatureTable::video_ids() const {
  std::vector<std::string> ids;
  ids.reserve(by_video_.size());
  for (const auto& [id, rows] : by_video_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

Matrix FeatureTable::gather(const std::vector<std::size_t>& rows) const {
  Matrix out(dim_, static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out.col(static_cast<Index>(i)) = feature(rows[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Splits, embeddings

void SplitManifest::validate() const {
  std::vector<std::string> problems;
  if (base.empty()) problems.push_back("base split is empty");
  if (novel.empty()) problems.push_back("novel split is empty");
  std::map<int, std::string> owner;
  auto claim = [&](const std::vector<int>& ids, const std::string& name) {
    for (int id : ids) {
      auto [it, inserted] = owner.emplace(id, name);
      if (!inserted)
        problems.push_back("class " + std::to_string(id) + " in both " + it->second + " and " +
                           name);
    }
  };
  claim(base, "base");
  claim(val, "val");
  claim(novel, "novel");
  if (!problems.empty()) throw ValidationError("invalid split manifest", problems);
}

WordEmbeddingTable::WordEmbeddingTable(Index dim) : dim_(dim) {}

void WordEmbeddingTable::add(const std::string& token, const Vector& vec) {
  if (vec.size() != dim_)
    throw ShapeError("embedding for '" + token + "' has " + std::to_string(vec.size()) +
                     " values, expected " + std::to_string(dim_));
  if (index_.count(token)) throw Error("duplicate token '" + token + "'");
  if (vec.norm() == 0.0) throw Error("zero-norm embedding for token '" + token + "'");
  if (!vec.allFinite()) throw Error("non-finite embedding for token '" + token + "'");
  index_.emplace(token, tokens_.size());
  tokens_.push_back(token);
  values_.insert(values_.end(), vec.data(), vec.data() + dim_);
}

Eigen::Map<const Vector> WordEmbeddingTable::vector(std::size_t i) const {
  return Eigen::Map<const Vector>(values_.data() + i * static_cast<std::size_t>(dim_), dim_);
}

std::optional<std::size_t> WordEmbeddingTable::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SemanticEmbeddingTable::SemanticEmbeddingTable(Index dim) : dim_(dim) {}

void SemanticEmbeddingTable::add(int class_id, const Vector& vec) {
  if (vec.size() != dim_)
    throw ShapeError("class embedding " + std::to_string(class_id) + " has " +
                     std::to_string(vec.size()) + " values, expected " + std::to_string(dim_));
  if (rows_.count(class_id)) throw Error("duplicate class embedding " + std::to_string(class_id));
  if (vec.norm() == 0.0)
    throw Error("zero-norm class embedding for class " + std::to_string(class_id));
  if (!vec.allFinite())
    throw Error("non-finite class embedding for class " + std::to_string(class_id));
  rows_.emplace(class_id, vec);
}

const Vector& SemanticEmbeddingTable::at(int class_id) const {
  auto it = rows_.find(class_id);
  if (it == rows_.end())
    throw Error("class " + std::to_string(class_id) + " has no semantic embedding");
  return it->second;
}

// ---------------------------------------------------------------------------
// Dataset

void Dataset::reindex() {
  class_videos_.clear();
  for (const auto& [video, cls] : labels) class_videos_[cls].push_back(video);
  base_test_set_ = std::set<std::string>(splits.base_test_videos.begin(),
                                         splits.base_test_videos.end());
}

const std::vector<std::string>& Dataset::videos_of_class(int class_id) const {
  auto it = class_videos_.find(class_id);
  return it == class_videos_.end() ? kNoVideos : it->second;
}

std::vector<std::string> Dataset::base_train_videos(int class_id) const {
  std::vector<std::string> out;
  for (const auto& v : videos_of_class(class_id))
    if (!is_base_test(v)) out.push_back(v);
  return out;
}

std::vector<std::string> Dataset::base_test_videos(int class_id) const {
  std::vector<std::string> out;
  for (const auto& v : videos_of_class(class_id))
    if (is_base_test(v)) out.push_back(v);
  return out;
}

bool Dataset::is_base_test(const std::string& video_id) const {
  return base_test_set_.count(video_id) != 0;
}

void Dataset::validate() const {
  splits.validate();

  std::vector<std::string> missing;
  for (const auto& [video, cls] : labels)
    if (!features.has_video(video)) missing.push_back(video);
  if (!missing.empty())
    throw ValidationError("labeled videos absent from the feature table", missing);

  std::set<int> labeled;
  for (const auto& [video, cls] : labels) labeled.insert(cls);
  std::vector<std::string> unknown;
  for (const auto* split : {&splits.base, &splits.val, &splits.novel})
    for (int id : *split)
      if (!labeled.count(id)) unknown.push_back(std::to_string(id));
  if (!unknown.empty()) throw ValidationError("split classes without labeled videos", unknown);

  std::set<int> base(splits.base.begin(), splits.base.end());
  std::vector<std::string> bad_test;
  for (const auto& v : splits.base_test_videos) {
    auto it = labels.find(v);
    if (it == labels.end() || !base.count(it->second)) bad_test.push_back(v);
  }
  if (!bad_test.empty())
    throw ValidationError("base test videos that are not labeled base-class videos", bad_test);

  if (!class_names.empty()) {
    std::vector<std::string> unnamed;
    for (int id : labeled)
      if (!class_names.count(id)) unnamed.push_back(std::to_string(id));
    if (!unnamed.empty()) throw ValidationError("classes without a name", unnamed);
  }

  if (tags) {
    std::vector<std::string> orphan;
    for (const auto& tv : *tags)
      if (!features.has_video(tv.video_id)) orphan.push_back(tv.video_id);
    if (!orphan.empty()) throw ValidationError("tagged videos absent from the feature table", orphan);
  }
}

DatasetPaths DatasetPaths::in_directory(const std::filesystem::path& dir) {
  DatasetPaths p;
  p.features = dir / kFeaturesFile;
  p.labels = dir / kLabelsFile;
  p.splits = dir / kSplitsFile;
  auto optional_file = [&](const char* name) -> std::optional<std::filesystem::path> {
    auto path = dir / name;
    if (std::filesystem::exists(path)) return path;
    return std::nullopt;
  };
  p.classes = optional_file(kClassesFile);
  p.tags = optional_file(kTagsFile);
  p.word_embeddings = optional_file(kWordEmbeddingsFile);
  p.class_embeddings = optional_file(kClassEmbeddingsFile);
  return p;
}

// ---------------------------------------------------------------------------
// Readers

FeatureTable read_features(const std::filesystem::path& path) {
  io::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw ParseError(reader.source(), 1, "missing #dim header");
  const auto dim = static_cast<Index>(
      io::parse_header_value(line, "dim", reader.source(), reader.line_number()));
  FeatureTable table(dim);
  while (reader.next(line)) {
    if (is_blank(line)) continue;
    const auto cols = io::split(line, '\t');
    const std::size_t n = reader.line_number();
    if (cols.size() < 2) throw ParseError(reader.source(), n, "expected video_id and clip_index");
    const auto clip = io::parse_int(cols[1], reader.source(), n);
    Vector v = parse_vector(cols, 2, dim, reader.source(), n);
    try {
      table.add(std::string(cols[0]), static_cast<int>(clip), v);
    } catch (const Error& e) {
      throw ParseError(reader.source(), n, e.what());
    }
  }
  table.canonicalize();
  return table;
}

LabelTable read_labels(const std::filesystem::path& path) {
  io::LineReader reader(path);
  LabelTable labels;
  std::string line;
  while (reader.next(line)) {
    if (is_blank(line)) continue;
    const auto cols = io::split(line, '\t');
    const std::size_t n = reader.line_number();
    if (cols.size() != 2)
      throw ParseError(reader.source(), n, "expected 2 columns, got " + std::to_string(cols.size()));
    const auto cls = io::parse_int(cols[1], reader.source(), n);
    if (cls < 0) throw ParseError(reader.source(), n, "class_id must be non-negative");
    if (!labels.emplace(std::string(cols[0]), static_cast<int>(cls)).second)
      throw ParseError(reader.source(), n, "duplicate label for video " + std::string(cols[0]));
  }
  return labels;
}

ClassNames read_classes(const std::filesystem::path& path) {
  io::LineReader reader(path);
  ClassNames names;
  std::string line;
  while (reader.next(line)) {
    if (is_blank(line)) continue;
    const auto cols = io::split(line, '\t');
    const std::size_t n = reader.line_number();
    if (cols.size() != 2)
      throw ParseError(reader.source(), n, "expected 2 columns, got " + std::to_string(cols.size()));
    const auto cls = io::parse_int(cols[0], reader.source(), n);
    if (!names.emplace(static_cast<int>(cls), std::string(cols[1])).second)
      throw ParseError(reader.source(), n, "duplicate class " + std::to_string(cls));
  }
  return names;
}

SplitManifest read_splits(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto upto = text.substr(0, std::min<std::size_t>(e.byte, text.size()));
    const auto line = static_cast<std::size_t>(std::count(upto.begin(), upto.end(), '\n')) + 1;
    throw ParseError(path.string(), line, e.what());
  }
  SplitManifest m;
  auto ids = [&](const char* key, bool required) {
    std::vector<int> out;
    if (!j.contains(key)) {
      if (required) throw ParseError(path.string(), 1, std::string("missing key '") + key + "'");
      return out;
    }
    try {
      out = j.at(key).get<std::vector<int>>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError(path.string(), 1, std::string("key '") + key + "' must be an array of integers");
    }
    return sorted_unique(out);
  };
  m.base = ids("base", true);
  m.val = ids("val", true);
  m.novel = ids("novel", true);
  if (j.contains("base_test_videos")) {
    try {
      m.base_test_videos = j.at("base_test_videos").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError(path.string(), 1, "key 'base_test_videos' must be an array of strings");
    }
    std::sort(m.base_test_videos.begin(), m.base_test_videos.end());
  }
  return m;
}

TagCorpus read_tags(const std::filesystem::path& path) {
  io::LineReader reader(path);
  TagCorpus corpus;
  std::set<std::string> seen;
  std::string line;
  while (reader.next(line)) {
    if (is_blank(line)) continue;
    const auto cols = io::split(line, '\t');
    const std::size_t n = reader.line_number();
    if (cols.size() != 2)
      throw ParseError(reader.source(), n, "expected 2 columns, got " + std::to_string(cols.size()));
    TaggedVideo tv;
    tv.video_id = std::string(cols[0]);
    if (!seen.insert(tv.video_id).second)
      throw ParseError(reader.source(), n, "duplicate tagged video " + tv.video_id);
    for (auto tag : io::split(cols[1], '|')) {
      tag = io::trim(tag);
      if (!tag.empty()) tv.tags.emplace_back(tag);
    }
    if (tv.tags.empty()) throw ParseError(reader.source(), n, "video " + tv.video_id + " has no tags");
    corpus.push_back(std::move(tv));
  }
  std::sort(corpus.begin(), corpus.end(),
            [](const TaggedVideo& a, const TaggedVideo& b) { return a.video_id < b.video_id; });
  return corpus;
}

WordEmbeddingTable read_word_embeddings(const std::filesystem::path& path) {
  io::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw ParseError(reader.source(), 1, "missing #dim header");
  const auto dim = static_cast<Index>(
      io::parse_header_value(line, "dim", reader.source(), reader.line_number()));
  WordEmbeddingTable table(dim);
  while (reader.next(line)) {
    if (is_blank(line)) continue;
    const auto cols = io::split(line, '\t');
    const std::size_t n = reader.line_number();
    Vector v = parse_vector(cols, 1, dim, reader.source(), n);
    try {
      table.add(std::string(cols[0]), v);
    } catch (const Error& e) {
      throw ParseError(reader.source(), n, e.what());
    }
  }
  return table;
}

SemanticEmbeddingTable read_class_embeddings(const std::filesystem::path& path) {
  io::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw ParseError(reader.source(), 1, "missing #dim header");
  const auto dim = static_cast<Index>(
      io::parse_header_value(line, "dim", reader.source(), reader.line_number()));
  SemanticEmbeddingTable table(dim);
  while (reader.next(line)) {
    if (is_blank(line)) continue;
    const auto cols = io::split(line, '\t');
    const std::size_t n = reader.line_number();
    const auto cls = io::parse_int(cols[0], reader.source(), n);
    Vector v = parse_vector(cols, 1, dim, reader.source(), n);
    try {
      table.add(static_cast<int>(cls), v);
    } catch (const Error& e) {
      throw ParseError(reader.source(), n, e.what());
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Writers

std::string format_features(const FeatureTable& table) {
  std::string out = "#dim=" + std::to_string(table.dim()) + "\n";
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto& k = table.key(r);
    out += k.video_id;
    out += '\t';
    out += std::to_string(k.clip_index);
    append_vector(out, table.feature(r).data(), table.dim());
    out += '\n';
  }
  return out;
}

std::string format_labels(const LabelTable& labels) {
  std::string out;
  for (const auto& [video, cls] : labels) out += video + "\t" + std::to_string(cls) + "\n";
  return out;
}

std::string format_classes(const ClassNames& names) {
  std::string out;
  for (const auto& [cls, name] : names) out += std::to_string(cls) + "\t" + name + "\n";
  return out;
}

std::string format_splits(const SplitManifest& splits) {
  nlohmann::ordered_json j;
  j["base"] = splits.base;
  j["val"] = splits.val;
  j["novel"] = splits.novel;
  if (!splits.base_test_videos.empty()) j["base_test_videos"] = splits.base_test_videos;
  return j.dump(1) + "\n";
}

std::string format_tags(const TagCorpus& corpus) {
  std::string out;
  for (const auto& tv : corpus) {
    out += tv.video_id;
    out += '\t';
    for (std::size_t i = 0; i < tv.tags.size(); ++i) {
      if (i) out += '|';
      out += tv.tags[i];
    }
    out += '\n';
  }
  return out;
}

std::string format_word_embeddings(const WordEmbeddingTable& table) {
  std::string out = "#dim=" + std::to_string(table.dim()) + "\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += table.token(i);
    append_vector(out, table.vector(i).data(), table.dim());
    out += '\n';
  }
  return out;
}

std::string format_class_embeddings(const SemanticEmbeddingTable& table) {
  std::string out = "#dim=" + std::to_string(table.dim()) + "\n";
  for (const auto& [cls, vec] : table.rows()) {
    out += std::to_string(cls);
    append_vector(out, vec.data(), table.dim());
    out += '\n';
  }
  return out;
}

Dataset load_dataset(const DatasetPaths& paths) {
  auto require = [](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw MissingArtifactError("missing dataset file " + p.string());
  };
  require(paths.features);
  require(paths.labels);
  require(paths.splits);

  Dataset ds;
  ds.features = read_features(paths.features);
  ds.labels = read_labels(paths.labels);
  ds.splits = read_splits(paths.splits);
  if (paths.classes) ds.class_names = read_classes(*paths.classes);
  if (paths.tags) ds.tags = read_tags(*paths.tags);
  if (paths.word_embeddings) ds.words = read_word_embeddings(*paths.word_embeddings);
  if (paths.class_embeddings) ds.semantics = read_class_embeddings(*paths.class_embeddings);
  ds.reindex();
  ds.validate();
  return ds;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  io::write_file_atomic(dir / kFeaturesFile, format_features(dataset.features));
  io::write_file_atomic(dir / kLabelsFile, format_labels(dataset.labels));
  io::write_file_atomic(dir / kSplitsFile, format_splits(dataset.splits));
  if (!dataset.class_names.empty())
    io::write_file_atomic(dir / kClassesFile, format_classes(dataset.class_names));
  if (dataset.tags) io::write_file_atomic(dir / kTagsFile, format_tags(*dataset.tags));
  if (dataset.words)
    io::write_file_atomic(dir / kWordEmbeddingsFile, format_word_embeddings(*dataset.words));
  if (dataset.semantics)
    io::write_file_atomic(dir / kClassEmbeddingsFile, format_class_embeddings(*dataset.semantics));
}

}  // namespace fsv::data
