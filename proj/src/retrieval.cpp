#include "fsv/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "fsv/errors.hpp"
#include "fsv/rng.hpp"
#include "fsv/text_io.hpp"

namespace fsv::ret {

double dot(const double* a, const double* b, Index n) {
  double s = 0.0;
  for (Index i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
  const double na = std::sqrt(dot(a.data(), a.data(), a.size()));
  const double nb = std::sqrt(dot(b.data(), b.data(), b.size()));
  return dot(a.data(), b.data(), a.size()) / (na * nb);
}

namespace {

double clamp_cos(double c) { return std::clamp(c, -1.0, 1.0); }

std::vector<std::string> whitespace_tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

}  // namespace

TagIndex build_tag_index(const data::TagCorpus& corpus, const data::WordEmbeddingTable& words) {
  std::vector<const data::TaggedVideo*> order;
  order.reserve(corpus.size());
  for (const auto& tv : corpus) order.push_back(&tv);
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->video_id < b->video_id; });

  TagIndex index;
  std::vector<Vector> rows;
  for (const auto* tv : order) {
    Vector sum = Vector::Zero(words.dim());
    int hits = 0;
    for (const auto& tag : tv->tags) {
      if (auto i = words.find(tag)) {
        sum += words.vector(*i);
        ++hits;
      }
    }
    if (hits == 0) {
      ++index.dropped;
      continue;
    }
    Vector mean = sum / static_cast<double>(hits);
    if (std::sqrt(dot(mean.data(), mean.data(), mean.size())) == 0.0) {
      ++index.dropped;
      continue;
    }
    index.video_ids.push_back(tv->video_id);
    rows.push_back(std::move(mean));
  }
  if (rows.empty()) throw Error("tag index is empty: no video has an in-vocabulary tag");
  index.embeddings.resize(words.dim(), static_cast<Index>(rows.size()));
  index.norms.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto c = static_cast<Index>(i);
    index.embeddings.col(c) = rows[i];
    index.norms(c) = std::sqrt(dot(rows[i].data(), rows[i].data(), rows[i].size()));
  }
  return index;
}

Vector class_query(const std::string& class_name, const data::WordEmbeddingTable& words) {
  Vector sum = Vector::Zero(words.dim());
  int hits = 0;
  for (const auto& tok : whitespace_tokens(class_name)) {
    if (auto i = words.find(tok)) {
      sum += words.vector(*i);
      ++hits;
    }
  }
  if (hits == 0) throw Error("class name '" + class_name + "' has no in-vocabulary token");
  return sum / static_cast<double>(hits);
}

std::vector<Hit> retrieve_candidates(const Vector& query, const TagIndex& index, std::size_t n) {
  if (n == 0) throw Error("retrieve_candidates: N must be at least 1");
  if (query.size() != index.dim())
    throw ShapeError("retrieve_candidates: query has " + std::to_string(query.size()) +
                     " dims, index has " + std::to_string(index.dim()));
  const double qn = std::sqrt(dot(query.data(), query.data(), query.size()));
  if (qn == 0.0) throw Error("retrieve_candidates: zero-norm query");

  const std::size_t total = index.size();
  std::vector<double> cos(total);
  for (std::size_t i = 0; i < total; ++i) {
    const auto c = static_cast<Index>(i);
    cos[i] = clamp_cos(dot(query.data(), index.embeddings.col(c).data(), index.dim()) /
                       (qn * index.norms(c)));
  }
  // video_ids are ascending, so the row index breaks ties by id.
  auto better = [&](std::size_t a, std::size_t b) {
    if (cos[a] != cos[b]) return cos[a] > cos[b];
    return a < b;
  };
  std::vector<std::size_t> rows(total);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const std::size_t k = std::min(n, total);
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end(), better);
  std::vector<Hit> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({index.video_ids[rows[i]], cos[rows[i]]});
  return out;
}

Vector class_prototype(const Matrix& clips) {
  if (clips.cols() == 0) throw Error("class_prototype: no clips");
  Vector sum = Vector::Zero(clips.rows());
  for (Index c = 0; c < clips.cols(); ++c) sum += clips.col(c);
  return sum / static_cast<double>(clips.cols());
}

ClipSelection select_best_clips(const Vector& prototype, const std::vector<data::ClipKey>& keys,
                                const Matrix& features, std::size_t m) {
  if (m == 0) throw Error("select_best_clips: M must be at least 1");
  if (features.cols() != static_cast<Index>(keys.size()))
    throw ShapeError("select_best_clips: key count differs from feature columns");
  if (features.cols() > 0 && features.rows() != prototype.size())
    throw ShapeError("select_best_clips: prototype and clip widths differ");
  const double pn = std::sqrt(dot(prototype.data(), prototype.data(), prototype.size()));
  if (pn == 0.0) throw Error("select_best_clips: zero-norm prototype");

  ClipSelection sel;
  std::vector<std::size_t> rows;
  std::vector<double> cos(keys.size(), 0.0);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto c = static_cast<Index>(i);
    const double* f = features.col(c).data();
    const double fn = std::sqrt(dot(f, f, features.rows()));
    if (fn == 0.0) {
      ++sel.skipped_zero_norm;
      continue;
    }
    cos[i] = clamp_cos(dot(prototype.data(), f, prototype.size()) / (pn * fn));
    rows.push_back(i);
  }
  auto better = [&](std::size_t a, std::size_t b) {
    if (cos[a] != cos[b]) return cos[a] > cos[b];
    return keys[a] < keys[b];
  };
  const std::size_t k = std::min(m, rows.size());
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end(), better);
  for (std::size_t i = 0; i < k; ++i)
    sel.clips.push_back({keys[rows[i]].video_id, keys[rows[i]].clip_index, cos[rows[i]]});
  return sel;
}

void RetrievalConfig::validate() const {
  if (candidates < 1) throw ConfigError("retrieval N must be at least 1");
  if (clips_per_class < 1) throw ConfigError("retrieval M must be at least 1");
  if (clips_per_candidate < 1) throw ConfigError("clips per candidate must be at least 1");
}

std::size_t PseudoSet::total_clips() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.clips.size();
  return n;
}

const PseudoEntry* PseudoSet::find(int class_id) const {
  for (const auto& e : entries)
    if (e.class_id == class_id) return &e;
  return nullptr;
}

PseudoSet assemble_pseudo_set(std::vector<ClassRequest> classes, const TagIndex& index,
                              const data::FeatureTable& features, const RetrievalConfig& config,
                              std::uint64_t seed) {
  config.validate();
  std::sort(classes.begin(), classes.end(),
            [](const ClassRequest& a, const ClassRequest& b) { return a.class_id < b.class_id; });
  for (std::size_t i = 1; i < classes.size(); ++i)
    if (classes[i].class_id == classes[i - 1].class_id)
      throw Error("assemble_pseudo_set: class " + std::to_string(classes[i].class_id) +
                  " requested twice");

  PseudoSet out;
  std::set<data::ClipKey> taken;
  for (const auto& req : classes) {
    PseudoEntry entry;
    entry.class_id = req.class_id;
    auto rng = derive_rng(seed, static_cast<std::uint64_t>(req.class_id));
    const Vector proto = class_prototype(req.few_shot);

    std::vector<data::ClipKey> keys;
    for (const auto& hit : retrieve_candidates(req.query, index, config.candidates)) {
      const auto& rows = features.rows_of(hit.video_id);
      if (rows.empty()) continue;
      ++entry.candidates;
      std::set<std::size_t> drawn;
      if (rows.size() >= config.clips_per_candidate) {
        for (auto i : sample_without_replacement(rows.size(), config.clips_per_candidate, rng))
          drawn.insert(rows[i]);
      } else {
        for (std::size_t i = 0; i < config.clips_per_candidate; ++i)
          drawn.insert(rows[static_cast<std::size_t>(rng.uniform_int(rows.size()))]);
      }
      for (auto r : drawn) {
        const auto& key = features.key(r);
        if (!taken.count(key)) keys.push_back(key);
      }
    }

    Matrix cand(features.dim(), static_cast<Index>(keys.size()));
    for (std::size_t i = 0; i < keys.size(); ++i)
      cand.col(static_cast<Index>(i)) = features.feature(*features.find(keys[i].video_id, keys[i].clip_index));

    if (config.best_clips) {
      entry.clips = select_best_clips(proto, keys, cand, config.clips_per_class).clips;
      entry.short_of_quota = entry.clips.size() < config.clips_per_class;
    } else {
      for (std::size_t i = 0; i < keys.size(); ++i)
        entry.clips.push_back({keys[i].video_id, keys[i].clip_index,
                               clamp_cos(cosine(proto, cand.col(static_cast<Index>(i))))});
      entry.short_of_quota = entry.clips.empty();
    }
    for (const auto& c : entry.clips) taken.insert({c.video_id, c.clip_index});
    out.entries.push_back(std::move(entry));
  }
  return out;
}

PseudoFeatures gather_pseudo_features(const PseudoSet& set, const data::FeatureTable& features) {
  PseudoFeatures out;
  out.x.resize(features.dim(), static_cast<Index>(set.total_clips()));
  Index col = 0;
  for (const auto& e : set.entries)
    for (const auto& c : e.clips) {
      const auto row = features.find(c.video_id, c.clip_index);
      if (!row)
        throw MissingArtifactError("pseudo clip " + c.video_id + "#" +
                                   std::to_string(c.clip_index) + " has no stored feature");
      out.x.col(col++) = features.feature(*row);
      out.y.push_back(e.class_id);
    }
  return out;
}

std::string format_pseudo_set(const PseudoSet& set) {
  std::string out;
  for (const auto& e : set.entries)
    for (const auto& c : e.clips)
      out += std::to_string(e.class_id) + "\t" + c.video_id + "\t" + std::to_string(c.clip_index) +
             "\t" + io::format_double(c.cosine) + "\n";
  return out;
}

PseudoSet parse_pseudo_set(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  std::map<int, PseudoEntry> entries;
  while (std::getline(in, line)) {
    ++n;
    if (io::trim(line).empty()) continue;
    const auto cols = io::split(line, '\t');
    if (cols.size() != 4)
      throw ParseError(source, n, "expected 4 columns, got " + std::to_string(cols.size()));
    const int cls = static_cast<int>(io::parse_int(cols[0], source, n));
    auto& e = entries[cls];
    e.class_id = cls;
    e.clips.push_back({std::string(cols[1]), static_cast<int>(io::parse_int(cols[2], source, n)),
                       io::parse_double(cols[3], source, n)});
  }
  PseudoSet set;
  for (auto& [cls, e] : entries) set.entries.push_back(std::move(e));
  return set;
}

}  // namespace fsv::ret
