#pragma once

// In-memory dataset bundle and its tab-separated file formats.
//
//   features.tsv          #dim=<d_v>, then video_id, clip_index, f1..f_dv
//   labels.tsv            video_id, class_id
//   classes.tsv           class_id, class_name
//   splits.json           {"base": [...], "val": [...], "novel": [...]}
//                         plus optional "base_test_videos": [video_id...]
//   tags.tsv              video_id, tag1|tag2|...
//   word_embeddings.tsv   #dim=<d_t>, then token, v1..v_dt
//   class_embeddings.tsv  #dim=<d_y>, then class_id, v1..v_dy
//
// Loaded tables are canonicalized (rows sorted by key), so the bundle does
// not depend on the row order of its files.

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fsv/numkernel.hpp"

namespace fsv::data {

struct ClipKey {
  std::string video_id;
  int clip_index = 0;

  auto operator<=>(const ClipKey&) const = default;
};

class FeatureTable {
 public:
  explicit FeatureTable(Index dim = 0);

  // Throws ShapeError on a wrong-length vector, Error on a duplicate key or
  // non-finite entry.
  void add(const std::string& video_id, int clip_index, const Vector& feature);
  void canonicalize();

  Index dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  const ClipKey& key(std::size_t row) const { return keys_[row]; }
  Eigen::Map<const Vector> feature(std::size_t row) const;

  bool has_video(const std::string& video_id) const;
  // Row indices of a video ordered by clip index; empty if unknown.
  const std::vector<std::size_t>& rows_of(const std::string& video_id) const;
  std::optional<std::size_t> find(const std::string& video_id, int clip_index) const;
  std::vector<std::string> video_ids() const;

  // Columns of the selected rows, in the given order.
  Matrix gather(const std::vector<std::size_t>& rows) const;

 private:
  Index dim_;
  std::vector<ClipKey> keys_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_video_;
};

using LabelTable = std::map<std::string, int>;
using ClassNames = std::map<int, std::string>;

struct SplitManifest {
  std::vector<int> base;
  std::vector<int> val;
  std::vector<int> novel;
  // Held-out videos of base classes, used only as generalized-setting queries.
  std::vector<std::string> base_test_videos;

  // Pairwise disjoint; base and novel nonempty.
  void validate() const;
};

struct TaggedVideo {
  std::string video_id;
  std::vector<std::string> tags;
};

using TagCorpus = std::vector<TaggedVideo>;

class WordEmbeddingTable {
 public:
  explicit WordEmbeddingTable(Index dim = 0);

  // Rejects duplicates, wrong lengths and all-zero vectors.
  void add(const std::string& token, const Vector& vec);
  Index dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t i) const { return tokens_[i]; }
  Eigen::Map<const Vector> vector(std::size_t i) const;
  std::optional<std::size_t> find(const std::string& token) const;

 private:
  Index dim_;
  std::vector<std::string> tokens_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

class SemanticEmbeddingTable {
 public:
  explicit SemanticEmbeddingTable(Index dim = 0);

  void add(int class_id, const Vector& vec);
  Index dim() const { return dim_; }
  bool contains(int class_id) const { return rows_.count(class_id) != 0; }
  // Throws Error naming the class if absent.
  const Vector& at(int class_id) const;
  const std::map<int, Vector>& rows() const { return rows_; }

 private:
  Index dim_;
  std::map<int, Vector> rows_;
};

struct Dataset {
  FeatureTable features;
  LabelTable labels;
  ClassNames class_names;
  SplitManifest splits;
  std::optional<TagCorpus> tags;
  std::optional<WordEmbeddingTable> words;
  std::optional<SemanticEmbeddingTable> semantics;

  // Rebuilds the per-class video index; call after mutating the tables.
  void reindex();

  // Labeled videos of a class, sorted by id.
  const std::vector<std::string>& videos_of_class(int class_id) const;
  // Base-class videos excluding the held-out base test videos.
  std::vector<std::string> base_train_videos(int class_id) const;
  std::vector<std::string> base_test_videos(int class_id) const;
  bool is_base_test(const std::string& video_id) const;

  // Cross-reference checks; throws ValidationError listing offenders.
  void validate() const;

 private:
  std::map<int, std::vector<std::string>> class_videos_;
  std::set<std::string> base_test_set_;
};

struct DatasetPaths {
  std::filesystem::path features;
  std::filesystem::path labels;
  std::filesystem::path splits;
  std::optional<std::filesystem::path> classes;
  std::optional<std::filesystem::path> tags;
  std::optional<std::filesystem::path> word_embeddings;
  std::optional<std::filesystem::path> class_embeddings;

  // Standard file names inside `dir`; optional files are included when present.
  static DatasetPaths in_directory(const std::filesystem::path& dir);
};

inline constexpr const char* kFeaturesFile = "features.tsv";
inline constexpr const char* kLabelsFile = "labels.tsv";
inline constexpr const char* kClassesFile = "classes.tsv";
inline constexpr const char* kSplitsFile = "splits.json";
inline constexpr const char* kTagsFile = "tags.tsv";
inline constexpr const char* kWordEmbeddingsFile = "word_embeddings.tsv";
inline constexpr const char* kClassEmbeddingsFile = "class_embeddings.tsv";

FeatureTable read_features(const std::filesystem::path& path);
LabelTable read_labels(const std::filesystem::path& path);
ClassNames read_classes(const std::filesystem::path& path);
SplitManifest read_splits(const std::filesystem::path& path);
TagCorpus read_tags(const std::filesystem::path& path);
WordEmbeddingTable read_word_embeddings(const std::filesystem::path& path);
SemanticEmbeddingTable read_class_embeddings(const std::filesystem::path& path);

std::string format_features(const FeatureTable& table);
std::string format_labels(const LabelTable& labels);
std::string format_classes(const ClassNames& names);
std::string format_splits(const SplitManifest& splits);
std::string format_tags(const TagCorpus& corpus);
std::string format_word_embeddings(const WordEmbeddingTable& table);
std::string format_class_embeddings(const SemanticEmbeddingTable& table);

// Loads, canonicalizes and validates a bundle.
Dataset load_dataset(const DatasetPaths& paths);
// Writes every present table under its standard file name.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace fsv::data
