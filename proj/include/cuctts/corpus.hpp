// Copyright (c) 2026 The cuctts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Corpus preparation: cross-utterance context windows, transcript location
// inside book text, acoustic feature extraction and the on-disk manifest.

#ifndef CUCTTS_CORPUS_HPP_
#define CUCTTS_CORPUS_HPP_

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "cuctts/archive.hpp"
#include "cuctts/audio.hpp"
#include "cuctts/g2p.hpp"

namespace cuctts::corpus {

/// Context slot value for a neighbor that lies outside the document.
inline const std::string kSentinel;

struct UtteranceRecord {
  std::string id;
  std::string text;
  std::string speaker_id;
  std::string audio_path;
  std::vector<std::string> context_ids;  ///< 2L+1 ids, center == id
  std::string feature_path;

  bool operator==(const UtteranceRecord&) const = default;
};

struct DocumentUtterance {
  std::string id;
  std::string text;
  std::string speaker_id;
  std::string audio_path;
};

using Document = std::vector<DocumentUtterance>;

/// Builds one record per utterance whose context holds the L preceding and L
/// following ids of the same document, padded with kSentinel at the edges.
inline std::vector<UtteranceRecord> build_context_windows(const std::vector<Document>& documents,
                                                          int context_size) {
  if (context_size < 1) throw std::invalid_argument("context size L must be >= 1");
  std::vector<UtteranceRecord> out;
  for (const auto& doc : documents) {
    std::unordered_set<std::string> seen;
    for (const auto& u : doc) {
      if (!seen.insert(u.id).second)
        throw std::invalid_argument("duplicate utterance id in document: " + u.id);
    }
    const long n = static_cast<long>(doc.size());
    for (long i = 0; i < n; ++i) {
      UtteranceRecord r;
      r.id = doc[static_cast<std::size_t>(i)].id;
      r.text = text::normalize_text(doc[static_cast<std::size_t>(i)].text);
      if (r.text.empty()) throw std::invalid_argument("utterance " + r.id + " has empty text after normalization");
      r.speaker_id = doc[static_cast<std::size_t>(i)].speaker_id;
      r.audio_path = doc[static_cast<std::size_t>(i)].audio_path;
      for (long k = i - context_size; k <= i + context_size; ++k)
        r.context_ids.push_back(k >= 0 && k < n ? doc[static_cast<std::size_t>(k)].id : kSentinel);
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transcript location

struct Span {
  std::size_t begin = 0;  ///< byte offset into the book
  std::size_t end = 0;    ///< one past the last matched byte
  double similarity = 0.0;
  std::size_t distance = 0;
};

namespace detail {
/// Case- and punctuation-insensitive form plus a map back to source offsets.
struct Folded {
  std::string text;
  std::vector<std::size_t> origin;
};

inline Folded fold(std::string_view s) {
  Folded f;
  bool pending_space = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (std::isalnum(c)) {
      if (pending_space && !f.text.empty()) {
        f.text += ' ';
        f.origin.push_back(i);
      }
      pending_space = false;
      f.text += static_cast<char>(std::tolower(c));
      f.origin.push_back(i);
    } else {
      pending_space = true;
    }
  }
  return f;
}
}  // namespace detail

/// Levenshtein distance between two strings.
inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Approximate substring search: finds the book window with minimal edit
/// distance to the transcript (both folded), and accepts it when
/// 1 - distance / |transcript| >= threshold. Among equally good windows the
/// earliest ending one wins.
inline std::optional<Span> locate_in_book(std::string_view transcript, std::string_view book,
                                          double threshold = 0.85) {
  if (book.empty()) throw std::invalid_argument("locate_in_book: empty book text");
  const auto q = detail::fold(transcript);
  const auto b = detail::fold(book);
  const std::size_t m = q.text.size(), n = b.text.size();
  if (m == 0 || n == 0) return std::nullopt;
  // Semi-global alignment: free start and end in the book.
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1);
  std::vector<std::size_t> prev_start(n + 1), cur_start(n + 1);
  std::iota(prev_start.begin(), prev_start.end(), std::size_t{0});
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = i;
    cur_start[0] = 0;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t diag = prev[j - 1] + (q.text[i - 1] != b.text[j - 1]);
      const std::size_t up = prev[j] + 1;
      const std::size_t left = cur[j - 1] + 1;
      if (diag <= up && diag <= left) {
        cur[j] = diag;
        cur_start[j] = prev_start[j - 1];
      } else if (up <= left) {
        cur[j] = up;
        cur_start[j] = prev_start[j];
      } else {
        cur[j] = left;
        cur_start[j] = cur_start[j - 1];
      }
    }
    std::swap(prev, cur);
    std::swap(prev_start, cur_start);
  }
  std::size_t best_j = 1;
  for (std::size_t j = 1; j <= n; ++j)
    if (prev[j] < prev[best_j]) best_j = j;
  const std::size_t dist = prev[best_j];
  const double sim = 1.0 - static_cast<double>(dist) / static_cast<double>(m);
  if (sim < threshold) return std::nullopt;
  std::size_t s = prev_start[best_j];
  if (s >= best_j) return std::nullopt;
  Span span;
  span.begin = b.origin[s];
  span.end = b.origin[best_j - 1] + 1;
  span.similarity = sim;
  span.distance = dist;
  return span;
}

// ---------------------------------------------------------------------------
// Acoustic features

struct AcousticFeatures {
  Matrix<float> mel;            ///< [frames x n_mels] natural-log magnitudes
  std::vector<float> f0;        ///< Hz per frame, 0 = unvoiced
  std::vector<float> energy;    ///< per-frame spectral L2 norm
  std::vector<int> durations;   ///< frames per phoneme

  int num_frames() const { return static_cast<int>(mel.rows()); }
};

struct AlignedPhone {
  double start = 0.0;  ///< seconds
  double end = 0.0;
  std::string phone;
};

/// Parses an alignment interchange file: one "start end phone" line per
/// phone, times in seconds. Blank lines and '#' comments are skipped.
inline std::vector<AlignedPhone> read_alignment(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open alignment " + path.string());
  std::vector<AlignedPhone> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    AlignedPhone p;
    if (!(ls >> p.start >> p.end >> p.phone) || p.end < p.start)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed alignment line");
    out.push_back(std::move(p));
  }
  return out;
}

/// Rounds non-negative reals to integers summing to `total`, giving leftover
/// units to the largest fractional parts (ties to the earlier index).
inline std::vector<int> largest_remainder_round(const std::vector<double>& weights, int total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> out(weights.size(), 0);
  if (weights.empty()) return out;
  std::vector<double> scaled(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i)
    scaled[i] = sum > 0.0 ? weights[i] * total / sum : static_cast<double>(total) / weights.size();
  int assigned = 0;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    out[i] = static_cast<int>(std::floor(scaled[i]));
    assigned += out[i];
  }
  std::vector<std::size_t> order(scaled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scaled[a] - std::floor(scaled[a]) > scaled[b] - std::floor(scaled[b]);
  });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[order[k % order.size()]];
  return out;
}

/// Mel, F0, energy and per-phoneme durations for one utterance. Audio at a
/// different rate is resampled first. Without an alignment, frames are split
/// uniformly across phonemes.
inline AcousticFeatures extract_features(const audio::Waveform& wave, const text::PhonemeSequence& phonemes,
                                         const std::optional<std::vector<AlignedPhone>>& alignment,
                                         const audio::AudioConfig& cfg) {
  if (phonemes.size() == 0) throw std::invalid_argument("extract_features: empty phoneme sequence");
  if (alignment && alignment->size() != phonemes.size())
    throw std::invalid_argument("alignment has " + std::to_string(alignment->size()) +
                                " phones but the phoneme sequence has " + std::to_string(phonemes.size()));
  const audio::Waveform w = audio::resample(wave, cfg.sample_rate);
  if (w.samples.empty()) throw std::invalid_argument("extract_features: empty audio");
  AcousticFeatures feats;
  feats.mel = audio::log_mel(w.samples, cfg).cast<float>();
  feats.f0 = audio::track_f0(w.samples, cfg);
  feats.energy = audio::frame_energy(w.samples, cfg);
  const int frames = feats.num_frames();
  std::vector<double> weights(phonemes.size(), 1.0);
  if (alignment) {
    for (std::size_t i = 0; i < alignment->size(); ++i)
      weights[i] = ((*alignment)[i].end - (*alignment)[i].start) * cfg.sample_rate / cfg.hop;
  }
  feats.durations = largest_remainder_round(weights, frames);
  return feats;
}

/// Checks the invariants that downstream modules rely on.
inline void validate(const AcousticFeatures& f, const audio::AudioConfig& cfg) {
  const int total = std::accumulate(f.durations.begin(), f.durations.end(), 0);
  if (total != f.num_frames())
    throw std::invalid_argument("durations sum to " + std::to_string(total) + " but there are " +
                                std::to_string(f.num_frames()) + " frames");
  if (f.mel.cols() != cfg.n_mels) throw std::invalid_argument("mel bin count differs from configuration");
  if (static_cast<int>(f.f0.size()) != f.num_frames() || static_cast<int>(f.energy.size()) != f.num_frames())
    throw std::invalid_argument("f0/energy length differs from frame count");
  for (float v : f.f0)
    if (v != 0.0f && (v < cfg.f0_min - 1e-3 || v > cfg.f0_max + 1e-3))
      throw std::invalid_argument("f0 value outside configured range");
  for (int d : f.durations)
    if (d < 0) throw std::invalid_argument("negative duration");
}

inline void save_features(const std::filesystem::path& path, const AcousticFeatures& f,
                          const text::PhonemeSequence& phonemes) {
  io::TensorArchive a;
  a.put_f32("mel", f.mel);
  a.put_f32_vec("f0", f.f0);
  a.put_f32_vec("energy", f.energy);
  a.put_i32_vec("durations", f.durations);
  std::string joined;
  for (const auto& p : phonemes.phonemes) joined += (joined.empty() ? "" : " ") + p;
  a.put_string("phonemes", joined);
  a.save(path);
}

struct FeatureFile {
  AcousticFeatures features;
  text::PhonemeSequence phonemes;
};

inline FeatureFile load_features(const std::filesystem::path& path) {
  const auto a = io::TensorArchive::load(path);
  FeatureFile out;
  out.features.mel = a.get_f32("mel");
  out.features.f0 = a.get_f32_vec("f0");
  out.features.energy = a.get_f32_vec("energy");
  out.features.durations = a.get_i32_vec("durations");
  std::istringstream ss(a.get_string("phonemes"));
  std::string p;
  while (ss >> p) out.phonemes.phonemes.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest (one JSON object per line)

inline nlohmann::json to_json(const UtteranceRecord& r) {
  return {{"id", r.id},
          {"text", r.text},
          {"speaker_id", r.speaker_id},
          {"audio_path", r.audio_path},
          {"context_ids", r.context_ids},
          {"feature_path", r.feature_path}};
}

inline UtteranceRecord record_from_json(const nlohmann::json& j) {
  UtteranceRecord r;
  r.id = j.at("id").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.speaker_id = j.at("speaker_id").get<std::string>();
  r.audio_path = j.at("audio_path").get<std::string>();
  r.context_ids = j.at("context_ids").get<std::vector<std::string>>();
  r.feature_path = j.value("feature_path", std::string{});
  if (r.context_ids.empty() || r.context_ids.size() % 2 == 0 ||
      r.context_ids[r.context_ids.size() / 2] != r.id)
    throw std::runtime_error("manifest record " + r.id + " has a malformed context window");
  return r;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& r : records) os << to_json(r).dump() << '\n';
}

inline std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest " + path.string());
  std::vector<UtteranceRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

/// id -> text lookup used to render context windows.
inline std::map<std::string, std::string> text_index(const std::vector<UtteranceRecord>& records) {
  std::map<std::string, std::string> m;
  for (const auto& r : records) m[r.id] = r.text;
  return m;
}

inline std::vector<std::string> context_texts(const UtteranceRecord& r,
                                              const std::map<std::string, std::string>& texts) {
  std::vector<std::string> out;
  for (const auto& id : r.context_ids) {
    if (id == kSentinel) {
      out.push_back(kSentinel);
      continue;
    }
    auto it = texts.find(id);
    if (it == texts.end()) throw std::runtime_error("context id " + id + " is not in the manifest");
    out.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus ingestion

struct CorpusEntry {
  DocumentUtterance utt;
  std::string document;
  std::string book;  ///< optional path to the source book text
};

/// Reads `metadata.jsonl` ({"id","text","speaker_id","audio","document",
/// "book"?}) or an LJ-Speech style `metadata.csv` ("id|text|normalized",
/// document = id prefix before '-').
inline std::vector<CorpusEntry> read_corpus_metadata(const std::filesystem::path& corpus_dir) {
  std::vector<CorpusEntry> out;
  const auto jsonl = corpus_dir / "metadata.jsonl";
  const auto csv = corpus_dir / "metadata.csv";
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() ? path : corpus_dir / path).string();
  };
  if (std::filesystem::exists(jsonl)) {
    std::ifstream is(jsonl);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      CorpusEntry e;
      e.utt.id = j.at("id").get<std::string>();
      e.utt.text = j.at("text").get<std::string>();
      e.utt.speaker_id = j.value("speaker_id", std::string("speaker0"));
      e.utt.audio_path = resolve(j.value("audio", "wavs/" + e.utt.id + ".wav"));
      e.document = j.value("document", std::string("doc0"));
      if (j.contains("book")) e.book = resolve(j.at("book").get<std::string>());
      out.push_back(std::move(e));
    }
  } else if (std::filesystem::exists(csv)) {
    std::ifstream is(csv);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cols;
      std::stringstream ls(line);
      std::string c;
      while (std::getline(ls, c, '|')) cols.push_back(c);
      if (cols.size() < 2) throw std::runtime_error("metadata.csv: malformed line: " + line);
      CorpusEntry e;
      e.utt.id = cols[0];
      e.utt.text = cols.size() >= 3 && !cols[2].empty() ? cols[2] : cols[1];
      e.utt.speaker_id = "speaker0";
      e.utt.audio_path = (corpus_dir / "wavs" / (e.utt.id + ".wav")).string();
      e.document = e.utt.id.substr(0, e.utt.id.find('-'));
      out.push_back(std::move(e));
    }
  } else {
    throw std::runtime_error("corpus directory " + corpus_dir.string() +
                             " has neither metadata.jsonl nor metadata.csv");
  }
  return out;
}

/// Groups entries into documents in reading order. Entries that name a book
/// are ordered by where their transcript occurs in it; those that cannot be
/// located become single-utterance documents.
inline std::vector<Document> assemble_documents(const std::vector<CorpusEntry>& entries,
                                                double match_threshold = 0.85) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const CorpusEntry*>> groups;
  for (const auto& e : entries) {
    if (!groups.count(e.document)) order.push_back(e.document);
    groups[e.document].push_back(&e);
  }
  std::map<std::string, std::string> book_cache;
  std::vector<Document> docs;
  for (const auto& name : order) {
    auto& members = groups[name];
    std::vector<std::pair<std::size_t, const CorpusEntry*>> located;
    std::vector<const CorpusEntry*> plain;
    for (const auto* e : members) {
      if (e->book.empty()) {
        plain.push_back(e);
        continue;
      }
      auto& book = book_cache[e->book];
      if (book.empty()) {
        std::ifstream is(e->book);
        if (!is) throw std::runtime_error("cannot open book " + e->book);
        book.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
      }
      if (auto span = locate_in_book(e->utt.text, book, match_threshold)) {
        located.emplace_back(span->begin, e);
      } else {
        docs.push_back({e->utt});
      }
    }
    std::stable_sort(located.begin(), located.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    Document d;
    for (const auto& [_, e] : located) d.push_back(e->utt);
    for (const auto* e : plain) d.push_back(e->utt);
    if (!d.empty()) docs.push_back(std::move(d));
  }
  return docs;
}

struct PreprocessOptions {
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
  int context_size = 5;
  std::optional<std::filesystem::path> aligner_dir;
  std::optional<std::filesystem::path> lexicon;
  double match_threshold = 0.85;
  text::G2POptions g2p;
  audio::AudioConfig audio;
};

struct PreprocessReport {
  std::vector<UtteranceRecord> records;
  std::vector<std::pair<std::string, std::string>> failures;  ///< id, reason
};

/// Full corpus pass: documents -> context windows -> G2P -> features. Writes
/// `manifest.jsonl` and `features/<id>.feat` under out_dir.
inline PreprocessReport preprocess(const PreprocessOptions& opt) {
  const auto entries = read_corpus_metadata(opt.corpus_dir);
  const auto docs = assemble_documents(entries, opt.match_threshold);
  auto records = build_context_windows(docs, opt.context_size);
  text::G2P g2p(opt.g2p);
  if (opt.lexicon) g2p.load_lexicon(*opt.lexicon);
  const auto feat_dir = opt.out_dir / "features";
  std::filesystem::create_directories(feat_dir);
  PreprocessReport report;
  for (auto& r : records) {
    try {
      const auto phonemes = g2p(r.text);
      const auto wave = audio::read_wav(r.audio_path);
      std::optional<std::vector<AlignedPhone>> alignment;
      if (opt.aligner_dir) {
        const auto lab = *opt.aligner_dir / (r.id + ".lab");
        if (std::filesystem::exists(lab)) alignment = read_alignment(lab);
      }
      const auto feats = extract_features(wave, phonemes, alignment, opt.audio);
      validate(feats, opt.audio);
      r.feature_path = std::filesystem::absolute(feat_dir / (r.id + ".feat")).string();
      save_features(r.feature_path, feats, phonemes);
    } catch (const std::exception& e) {
      report.failures.emplace_back(r.id, e.what());
      r.feature_path.clear();
    }
  }
  // Failed utterances stay in the manifest without a feature path so their
  // text still serves as context for their neighbors.
  report.records = records;
  write_manifest(opt.out_dir / "manifest.jsonl", report.records);
  return report;
}

}  // namespace cuctts::corpus

#endif  // CUCTTS_CORPUS_HPP_
