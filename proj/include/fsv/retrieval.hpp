#pragma once

// Tag-embedding retrieval of candidate videos and prototype-based clip
// selection for pseudo-labeling novel classes.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fsv/datastore.hpp"

namespace fsv::ret {

// Dot product and norms accumulated left to right, so results do not depend
// on vectorization.
double dot(const double* a, const double* b, Index n);
double cosine(const Vector& a, const Vector& b);

struct TagIndex {
  std::vector<std::string> video_ids;  // ascending
  Matrix embeddings;                   // d_t x n, mean tag embedding per video
  Vector norms;
  std::size_t dropped = 0;  // videos without any in-vocabulary tag

  Index dim() const { return embeddings.rows(); }
  std::size_t size() const { return video_ids.size(); }
};

// Throws Error if no video survives.
TagIndex build_tag_index(const data::TagCorpus& corpus, const data::WordEmbeddingTable& words);

// Mean embedding of the whitespace-separated tokens of a class name.
Vector class_query(const std::string& class_name, const data::WordEmbeddingTable& words);

struct Hit {
  std::string video_id;
  double cosine = 0.0;
};

// Top-N by cosine, descending, ties by ascending video id.
std::vector<Hit> retrieve_candidates(const Vector& query, const TagIndex& index, std::size_t n);

// Mean over the columns of a d x n clip matrix.
Vector class_prototype(const Matrix& clips);

struct ClipRef {
  std::string video_id;
  int clip_index = 0;
  double cosine = 0.0;
};

struct ClipSelection {
  std::vector<ClipRef> clips;
  std::size_t skipped_zero_norm = 0;
};

// The M clips closest to the prototype by cosine, descending, ties by
// (video id, clip index). `features` holds one column per key.
ClipSelection select_best_clips(const Vector& prototype, const std::vector<data::ClipKey>& keys,
                                const Matrix& features, std::size_t m);

struct RetrievalConfig {
  std::size_t candidates = 20;           // N
  std::size_t clips_per_class = 5;       // M
  std::size_t clips_per_candidate = 15;  // clips drawn from each candidate video
  bool best_clips = true;                // rerank against the prototype

  void validate() const;
};

struct PseudoEntry {
  int class_id = 0;
  std::vector<ClipRef> clips;
  std::size_t candidates = 0;  // retrieved videos with stored features
  bool short_of_quota = false;
};

struct PseudoSet {
  std::vector<PseudoEntry> entries;  // ascending class id

  std::size_t total_clips() const;
  const PseudoEntry* find(int class_id) const;
};

struct ClassRequest {
  int class_id = 0;
  Vector query;      // tag-space query
  Matrix few_shot;   // d_v x n clips of the class's support videos
};

// Per class, in ascending class id: retrieve N candidates, draw clips from each
// (with replacement when a video has fewer stored clips; repeated draws of the
// same clip collapse), then keep the best M by cosine to the class prototype.
// Without best-clip reranking every drawn clip is kept. A clip already taken by
// an earlier class is skipped. Randomness comes from one stream per class
// derived from `seed`.
PseudoSet assemble_pseudo_set(std::vector<ClassRequest> classes, const TagIndex& index,
                              const data::FeatureTable& features, const RetrievalConfig& config,
                              std::uint64_t seed);

// Pseudo-labeled features of a set, column-wise, with their class ids.
struct PseudoFeatures {
  Matrix x;
  std::vector<int> y;
};
PseudoFeatures gather_pseudo_features(const PseudoSet& set, const data::FeatureTable& features);

std::string format_pseudo_set(const PseudoSet& set);
PseudoSet parse_pseudo_set(const std::string& text, const std::string& source);

}  // namespace fsv::ret
