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

#include <gtest/gtest.h>

#include <fstream>
#include <numbers>

#include "cuctts/corpus.hpp"
#include "cuctts/g2p.hpp"
#include "cuctts/toy_corpus.hpp"
#include "test_util.hpp"

namespace cuctts::corpus {
namespace {

Document make_doc(int n, const std::string& prefix = "u") {
  Document d;
  for (int i = 1; i <= n; ++i)
    d.push_back({prefix + std::to_string(i), "sentence number " + std::to_string(i), "spk", ""});
  return d;
}

// ---------------------------------------------------------------------------
// Context windows

TEST(ContextWindowsTest, InteriorAndBoundary) {
  const auto r = build_context_windows({make_doc(3)}, 1);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[1].context_ids, (std::vector<std::string>{"u1", "u2", "u3"}));
  EXPECT_EQ(r[0].context_ids, (std::vector<std::string>{kSentinel, "u1", "u2"}));
  EXPECT_EQ(r[2].context_ids, (std::vector<std::string>{"u2", "u3", kSentinel}));
}

TEST(ContextWindowsTest, ElevenUtterancesWithFiveNeighbors) {
  const auto r = build_context_windows({make_doc(11)}, 5);
  const auto& c = r[5].context_ids;
  ASSERT_EQ(c.size(), 11u);
  for (int i = 0; i < 11; ++i) EXPECT_EQ(c[static_cast<std::size_t>(i)], "u" + std::to_string(i + 1));
}

TEST(ContextWindowsTest, WindowsNeverCrossDocuments) {
  const auto r = build_context_windows({make_doc(2, "a"), make_doc(2, "b")}, 2);
  for (const auto& rec : r) {
    const char doc = rec.id[0];
    for (const auto& id : rec.context_ids)
      if (id != kSentinel) EXPECT_EQ(id[0], doc);
  }
}

TEST(ContextWindowsTest, InvariantsHoldForRandomDocuments) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 15), L = 1 + static_cast<int>(rng() % 6);
    const auto r = build_context_windows({make_doc(n)}, L);
    ASSERT_EQ(static_cast<int>(r.size()), n);
    for (int i = 0; i < n; ++i) {
      const auto& c = r[static_cast<std::size_t>(i)].context_ids;
      ASSERT_EQ(static_cast<int>(c.size()), 2 * L + 1);
      EXPECT_EQ(c[static_cast<std::size_t>(L)], r[static_cast<std::size_t>(i)].id);
      for (int k = -L; k <= L; ++k) {
        const int j = i + k;
        const auto& want = (j >= 0 && j < n) ? "u" + std::to_string(j + 1) : kSentinel;
        EXPECT_EQ(c[static_cast<std::size_t>(k + L)], want);
      }
    }
  }
}

TEST(ContextWindowsTest, ShiftingADocumentShiftsWindows) {
  // Prepending utterances changes only which ids fill the windows, not their
  // relative structure.
  auto d = make_doc(6);
  auto shifted = d;
  shifted.insert(shifted.begin(), {"x0", "extra", "spk", ""});
  const auto a = build_context_windows({d}, 2), b = build_context_windows({shifted}, 2);
  for (std::size_t i = 2; i < a.size(); ++i) EXPECT_EQ(a[i].context_ids, b[i + 1].context_ids);
}

TEST(ContextWindowsTest, RejectsDuplicatesAndBadL) {
  Document d = make_doc(3);
  d.push_back(d[1]);
  try {
    build_context_windows({d}, 1);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("u2"), std::string::npos);
  }
  EXPECT_THROW(build_context_windows({make_doc(3)}, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Book location

std::size_t brute_force_min_distance(const std::string& transcript, const std::string& book) {
  const auto q = detail::fold(transcript).text, b = detail::fold(book).text;
  std::size_t best = q.size();
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = i + 1; j <= b.size(); ++j) best = std::min(best, edit_distance(q, b.substr(i, j - i)));
  return best;
}

TEST(LocateInBookTest, ExactSentenceIsFound) {
  const std::string book = "It was late. Mary asked the time. Nobody answered.";
  const auto span = locate_in_book("Mary asked the time", book);
  ASSERT_TRUE(span);
  EXPECT_EQ(book.substr(span->begin, span->end - span->begin), "Mary asked the time");
  EXPECT_EQ(span->distance, 0u);
  EXPECT_DOUBLE_EQ(span->similarity, 1.0);
}

TEST(LocateInBookTest, CaseAndPunctuationAreIgnored) {
  const std::string book = "and then MARY, ASKED... the TIME!";
  const auto span = locate_in_book("mary asked the time", book);
  ASSERT_TRUE(span);
  EXPECT_EQ(span->distance, 0u);
}

TEST(LocateInBookTest, AbsentTranscriptIsNotFound) {
  EXPECT_FALSE(locate_in_book("completely different words here", "The cat sat on the mat all day long."));
  EXPECT_THROW(locate_in_book("x", ""), std::invalid_argument);
}

TEST(LocateInBookTest, TransposedWordMatchesBruteForceOracle) {
  const std::string book =
      "The rain had stopped by noon. After lunch the old captain walked slowly down to the harbour "
      "to look at his boat. Gulls circled overhead.";
  const std::string transcript = "After lunch the old captain walked down slowly to the harbour to look at his boat";
  const auto span = locate_in_book(transcript, book);
  ASSERT_TRUE(span);
  EXPECT_EQ(span->distance, brute_force_min_distance(transcript, book));
  EXPECT_GE(span->similarity, 0.85);
  const auto found = book.substr(span->begin, span->end - span->begin);
  EXPECT_EQ(found.rfind("After lunch", 0), 0u) << found;
}

TEST(LocateInBookTest, DistanceAgreesWithOracleOnRandomBooks) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> words = {"red", "fox", "ran", "far", "and", "sat", "down", "by", "a", "tree"};
  for (int trial = 0; trial < 20; ++trial) {
    std::string book, transcript;
    for (int i = 0; i < 10; ++i) book += words[rng() % words.size()] + (i % 4 == 3 ? ". " : " ");
    for (int i = 0; i < 3; ++i) transcript += words[rng() % words.size()] + " ";
    const auto span = locate_in_book(transcript, book, 0.0);
    ASSERT_TRUE(span);
    EXPECT_EQ(span->distance, brute_force_min_distance(transcript, book)) << transcript << "|" << book;
  }
}

// ---------------------------------------------------------------------------
// G2P

TEST(G2PTest, SingleLetterWordIsOnePhoneme) {
  text::G2P g2p({false, false});
  EXPECT_EQ(g2p("a").phonemes, (std::vector<std::string>{"AH"}));
}

TEST(G2PTest, DeterministicAndMatchesGoldenFile) {
  text::G2P g2p;
  const auto a = g2p("Mary asked the time"), b = g2p("Mary asked the time");
  EXPECT_EQ(a, b);
  std::ifstream is(std::string(CUCTTS_GOLDEN_DIR) + "/g2p_mary_asked_the_time.txt");
  ASSERT_TRUE(is);
  std::vector<std::string> golden;
  std::string p;
  while (is >> p) golden.push_back(p);
  EXPECT_EQ(a.phonemes, golden);
  EXPECT_GE(a.size(), 13u);
  EXPECT_LE(a.size(), 16u);
}

TEST(G2PTest, EverySymbolIsInTheInventory) {
  text::G2P g2p({true, true});
  for (const auto& s : toy::sentences())
    for (int id : g2p(s + " xylophone quixotic 42").ids()) EXPECT_GE(id, 0);
}

TEST(G2PTest, WordBoundariesAndEmptyText) {
  text::G2P g2p({true, true});
  const auto seq = g2p("the time");
  EXPECT_EQ(seq.phonemes, (std::vector<std::string>{"sil", "DH", "AH", "sp", "T", "AY", "M", "sil"}));
  EXPECT_THROW(g2p("  ...  "), std::invalid_argument);
}

TEST(G2PTest, LexiconFileOverridesRules) {
  const auto dir = testing::scratch_dir("lex");
  std::ofstream(dir / "lex.txt") << ";;; comment\nZORP  Z AO1 R P\nZORP(2)  Z AA R P\n";
  text::G2P g2p({false, false});
  g2p.load_lexicon(dir / "lex.txt");
  EXPECT_EQ(g2p("zorp").phonemes, (std::vector<std::string>{"Z", "AO", "R", "P"}));
  std::ofstream(dir / "bad.txt") << "WORD  Q9\n";
  EXPECT_THROW(g2p.load_lexicon(dir / "bad.txt"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST(G2PTest, NormalizationSpellsDigits) {
  EXPECT_EQ(text::normalize_text("Hello, World 42!"), "hello world four two");
}

// ---------------------------------------------------------------------------
// Features

TEST(FeaturesTest, LargestRemainderRoundingPreservesTotal) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> w(1 + rng() % 20);
    for (auto& x : w) x = u(rng);
    const int total = static_cast<int>(rng() % 200);
    const auto d = largest_remainder_round(w, total);
    EXPECT_EQ(std::accumulate(d.begin(), d.end(), 0), total);
    for (int x : d) EXPECT_GE(x, 0);
  }
  EXPECT_EQ(largest_remainder_round({1.0, 1.0, 1.0}, 10), (std::vector<int>{4, 3, 3}));
}

TEST(FeaturesTest, SilenceAndDurationsSumToFrames) {
  audio::AudioConfig cfg;
  text::G2P g2p;
  const auto ph = g2p("Mary asked the time");
  const audio::Waveform w{22050, std::vector<float>(22050, 0.0f)};
  const auto f = extract_features(w, ph, std::nullopt, cfg);
  EXPECT_EQ(f.num_frames(), 87);
  EXPECT_EQ(std::accumulate(f.durations.begin(), f.durations.end(), 0), 87);
  for (float x : f.f0) EXPECT_EQ(x, 0.0f);
  for (float x : f.energy) EXPECT_EQ(x, 0.0f);
  EXPECT_NO_THROW(validate(f, cfg));
}

TEST(FeaturesTest, AlignmentCountMismatchNamesBothCounts) {
  text::G2P g2p;
  const auto ph = g2p("the time");
  const std::vector<AlignedPhone> al = {{0.0, 0.1, "DH"}, {0.1, 0.2, "AH"}};
  try {
    extract_features({22050, std::vector<float>(4410, 0.0f)}, ph, al, {});
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(al.size())), std::string::npos);
    EXPECT_NE(msg.find(std::to_string(ph.size())), std::string::npos);
  }
}

TEST(FeaturesTest, AlignmentDrivesDurations) {
  audio::AudioConfig cfg;
  const auto u = toy::render("t", "the time", 3, cfg);
  const auto f = extract_features(u.wave, u.phonemes, toy::alignment(u, cfg), cfg);
  EXPECT_EQ(f.durations, u.durations);
}

TEST(FeaturesTest, ExtractionIsDeterministicAndRoundTrips) {
  audio::AudioConfig cfg;
  const auto dir = testing::scratch_dir("feat");
  const auto u = toy::render("t", "Her coat was still wet.", 9, cfg);
  const auto a = extract_features(u.wave, u.phonemes, std::nullopt, cfg);
  const auto b = extract_features(u.wave, u.phonemes, std::nullopt, cfg);
  save_features(dir / "a.feat", a, u.phonemes);
  save_features(dir / "b.feat", b, u.phonemes);
  std::ifstream fa(dir / "a.feat", std::ios::binary), fb(dir / "b.feat", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
  const auto back = load_features(dir / "a.feat");
  EXPECT_EQ(back.features.mel, a.mel);
  EXPECT_EQ(back.features.f0, a.f0);
  EXPECT_EQ(back.features.energy, a.energy);
  EXPECT_EQ(back.features.durations, a.durations);
  EXPECT_EQ(back.phonemes, u.phonemes);
  std::filesystem::remove_all(dir);
}

TEST(FeaturesTest, ValidateRejectsBadFeatures) {
  audio::AudioConfig cfg;
  AcousticFeatures f;
  f.mel = Matrix<float>::Zero(4, 80);
  f.f0 = {0, 0, 0, 0};
  f.energy = {0, 0, 0, 0};
  f.durations = {1, 2};
  EXPECT_THROW(validate(f, cfg), std::invalid_argument);
  f.durations = {2, 2};
  f.f0[1] = 20.0f;
  EXPECT_THROW(validate(f, cfg), std::invalid_argument);
}

TEST(AlignmentTest, ParsesLabFiles) {
  const auto dir = testing::scratch_dir("lab");
  std::ofstream(dir / "a.lab") << "# comment\n0.0 0.1 sil\n\n0.1 0.25 AH\n";
  const auto al = read_alignment(dir / "a.lab");
  ASSERT_EQ(al.size(), 2u);
  EXPECT_EQ(al[1].phone, "AH");
  EXPECT_DOUBLE_EQ(al[1].end, 0.25);
  std::ofstream(dir / "b.lab") << "0.0 sil\n";
  EXPECT_THROW(read_alignment(dir / "b.lab"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Manifest and pipeline

TEST(ManifestTest, RoundTripIsFieldByField) {
  const auto dir = testing::scratch_dir("manifest");
  auto records = build_context_windows({make_doc(4)}, 2);
  records[1].feature_path = "/x/y.feat";
  write_manifest(dir / "m.jsonl", records);
  EXPECT_EQ(read_manifest(dir / "m.jsonl"), records);
  std::filesystem::remove_all(dir);
}

TEST(ManifestTest, RejectsWindowsWhoseCenterIsNotTheId) {
  nlohmann::json j = to_json(build_context_windows({make_doc(3)}, 1)[1]);
  j["context_ids"] = {"u1", "u3", "u2"};
  EXPECT_THROW(record_from_json(j), std::runtime_error);
}

TEST(PreprocessTest, ToyCorpusEndToEnd) {
  const auto dir = testing::scratch_dir("preprocess");
  toy::write_corpus(dir / "corpus", 5, 1);
  PreprocessOptions opt;
  opt.corpus_dir = dir / "corpus";
  opt.out_dir = dir / "out";
  opt.context_size = 2;
  opt.aligner_dir = dir / "corpus" / "alignments";
  const auto report = preprocess(opt);
  EXPECT_TRUE(report.failures.empty());
  const auto records = read_manifest(dir / "out" / "manifest.jsonl");
  ASSERT_EQ(records.size(), 5u);
  audio::AudioConfig cfg;
  for (const auto& r : records) {
    EXPECT_EQ(r.context_ids.size(), 5u);
    const auto ff = load_features(r.feature_path);
    EXPECT_NO_THROW(validate(ff.features, cfg));
    EXPECT_EQ(std::accumulate(ff.features.durations.begin(), ff.features.durations.end(), 0),
              ff.features.num_frames());
  }
  EXPECT_EQ(records[2].context_ids, (std::vector<std::string>{"toy_000", "toy_001", "toy_002", "toy_003", "toy_004"}));
  std::filesystem::remove_all(dir);
}

TEST(PreprocessTest, FailedUtterancesStayInManifestWithoutFeatures) {
  const auto dir = testing::scratch_dir("preprocess_fail");
  toy::write_corpus(dir / "corpus", 3, 1);
  std::filesystem::remove(dir / "corpus" / "wavs" / "toy_001.wav");
  PreprocessOptions opt;
  opt.corpus_dir = dir / "corpus";
  opt.out_dir = dir / "out";
  opt.context_size = 1;
  const auto report = preprocess(opt);
  ASSERT_EQ(report.failures.size(), 1u);
  EXPECT_EQ(report.failures[0].first, "toy_001");
  const auto records = read_manifest(dir / "out" / "manifest.jsonl");
  ASSERT_EQ(records.size(), 3u);
  EXPECT_TRUE(records[1].feature_path.empty());
  EXPECT_FALSE(records[0].feature_path.empty());
  std::filesystem::remove_all(dir);
}

TEST(PreprocessTest, BookOrderingDefinesDocuments) {
  const auto dir = testing::scratch_dir("book");
  std::filesystem::create_directories(dir / "wavs");
  std::ofstream(dir / "book.txt") << "First came the wind. Then the rain fell hard. Finally the sun returned.";
  std::ofstream meta(dir / "metadata.jsonl");
  // Listed out of reading order; the book restores it.
  meta << R"({"id":"c","text":"Finally the sun returned","document":"ch1","book":"book.txt"})" << '\n'
       << R"({"id":"a","text":"First came the wind","document":"ch1","book":"book.txt"})" << '\n'
       << R"({"id":"b","text":"Then the rain fell hard","document":"ch1","book":"book.txt"})" << '\n'
       << R"({"id":"z","text":"Not in the book at all, really","document":"ch1","book":"book.txt"})" << '\n';
  meta.close();
  const auto docs = assemble_documents(read_corpus_metadata(dir));
  ASSERT_EQ(docs.size(), 2u);
  ASSERT_EQ(docs[0].size(), 1u);
  EXPECT_EQ(docs[0][0].id, "z");
  ASSERT_EQ(docs[1].size(), 3u);
  EXPECT_EQ(docs[1][0].id, "a");
  EXPECT_EQ(docs[1][1].id, "b");
  EXPECT_EQ(docs[1][2].id, "c");
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace cuctts::corpus
