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

// English text normalization and grapheme-to-phoneme conversion: a lexicon
// (built-in core words, optionally extended from a CMUdict-format file) with
// a rule-based letter-to-sound fallback. Output uses stressless ARPAbet.

#ifndef CUCTTS_G2P_HPP_
#define CUCTTS_G2P_HPP_

#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cuctts::text {

/// Fixed symbol inventory. Index 0 is padding, 1 utterance-edge silence,
/// 2 short inter-word pause.
inline const std::vector<std::string>& phoneme_inventory() {
  static const std::vector<std::string> inv = {
      "<pad>", "sil", "sp", "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH", "EH",
      "ER",    "EY",  "F",  "G",  "HH", "IH", "IY", "JH", "K",  "L",  "M",  "N",  "NG", "OW",
      "OY",    "P",   "R",  "S",  "SH", "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};
  return inv;
}

inline int phoneme_id(std::string_view symbol) {
  static const auto table = [] {
    std::unordered_map<std::string, int> m;
    const auto& inv = phoneme_inventory();
    for (std::size_t i = 0; i < inv.size(); ++i) m[inv[i]] = static_cast<int>(i);
    return m;
  }();
  auto it = table.find(std::string(symbol));
  return it == table.end() ? -1 : it->second;
}

inline bool is_silence(std::string_view symbol) {
  return symbol == "sil" || symbol == "sp" || symbol == "<pad>";
}

struct PhonemeSequence {
  std::vector<std::string> phonemes;

  std::size_t size() const { return phonemes.size(); }
  std::vector<int> ids() const {
    std::vector<int> out;
    out.reserve(phonemes.size());
    for (const auto& p : phonemes) out.push_back(phoneme_id(p));
    return out;
  }
  bool operator==(const PhonemeSequence&) const = default;
};

namespace detail {
inline const std::array<const char*, 10>& digit_words() {
  static const std::array<const char*, 10> w = {"zero", "one", "two", "three", "four",
                                                "five", "six", "seven", "eight", "nine"};
  return w;
}
}  // namespace detail

/// Lowercases, spells out digits, maps everything except letters and
/// apostrophes to spaces, and collapses whitespace.
inline std::string normalize_text(std::string_view in) {
  std::string spaced;
  spaced.reserve(in.size());
  for (char ch : in) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isdigit(c)) {
      spaced += ' ';
      spaced += detail::digit_words()[c - '0'];
      spaced += ' ';
    } else if (std::isalpha(c) || ch == '\'') {
      spaced += static_cast<char>(std::tolower(c));
    } else {
      spaced += ' ';
    }
  }
  std::string out;
  bool pending_space = false;
  for (char ch : spaced) {
    if (ch == ' ') {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += ch;
    }
  }
  return out;
}

inline std::vector<std::string> split_words(std::string_view normalized) {
  std::vector<std::string> words;
  std::istringstream ss{std::string(normalized)};
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

struct G2POptions {
  bool edge_silence = true;     ///< wrap the utterance in "sil"
  bool word_boundaries = false; ///< insert "sp" between words
};

class G2P {
 public:
  explicit G2P(G2POptions opts = {}) : opts_(opts) { load_core_lexicon(); }

  /// Adds entries from a CMUdict-style file ("WORD  PH1 PH2 ..."); stress
  /// digits are stripped and alternate pronunciations "WORD(2)" ignored.
  void load_lexicon(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open lexicon " + path.string());
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line.rfind(";;;", 0) == 0) continue;
      std::istringstream ls(line);
      std::string word;
      ls >> word;
      if (word.find('(') != std::string::npos) continue;
      std::vector<std::string> phones;
      std::string p;
      while (ls >> p) {
        while (!p.empty() && std::isdigit(static_cast<unsigned char>(p.back()))) p.pop_back();
        if (phoneme_id(p) < 0) throw std::runtime_error("lexicon " + path.string() + ": unknown phoneme " + p);
        phones.push_back(p);
      }
      if (!phones.empty()) lexicon_[normalize_text(word)] = std::move(phones);
    }
  }

  bool in_lexicon(const std::string& word) const { return lexicon_.count(word) != 0; }

  PhonemeSequence operator()(std::string_view raw) const {
    const auto words = split_words(normalize_text(raw));
    if (words.empty()) throw std::invalid_argument("g2p: text is empty after normalization");
    PhonemeSequence seq;
    if (opts_.edge_silence) seq.phonemes.push_back("sil");
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i > 0 && opts_.word_boundaries) seq.phonemes.push_back("sp");
      auto it = lexicon_.find(words[i]);
      const auto phones = it != lexicon_.end() ? it->second : letter_to_sound(words[i]);
      seq.phonemes.insert(seq.phonemes.end(), phones.begin(), phones.end());
    }
    if (opts_.edge_silence) seq.phonemes.push_back("sil");
    return seq;
  }

  /// Rule-based fallback for out-of-lexicon words.
  static std::vector<std::string> letter_to_sound(const std::string& word) {
    struct Rule {
      std::string_view graph;
      std::string_view phones;
    };
    static const std::vector<Rule> rules = {
        {"ough", "AO"}, {"augh", "AO"}, {"eigh", "EY"}, {"tion", "SH AH N"}, {"sion", "ZH AH N"},
        {"ture", "CH ER"}, {"tch", "CH"}, {"sch", "S K"}, {"igh", "AY"}, {"th", "TH"},
        {"sh", "SH"}, {"ch", "CH"}, {"ph", "F"}, {"ck", "K"}, {"ng", "NG"}, {"qu", "K W"},
        {"wh", "W"}, {"ee", "IY"}, {"ea", "IY"}, {"oo", "UW"}, {"ou", "AW"}, {"ow", "OW"},
        {"oi", "OY"}, {"oy", "OY"}, {"ai", "EY"}, {"ay", "EY"}, {"au", "AO"}, {"aw", "AO"},
        {"ie", "IY"}, {"ei", "IY"}, {"ey", "IY"}, {"ue", "UW"}, {"ew", "UW"}, {"ar", "AA R"},
        {"er", "ER"}, {"ir", "ER"}, {"ur", "ER"}, {"or", "AO R"}, {"ll", "L"}, {"ss", "S"},
        {"tt", "T"}, {"dd", "D"}, {"ff", "F"}, {"pp", "P"}, {"mm", "M"}, {"nn", "N"},
        {"rr", "R"}, {"bb", "B"}, {"gg", "G"}, {"zz", "Z"}, {"cc", "K"}};
    std::vector<std::string> out;
    auto emit = [&out](std::string_view phones) {
      std::istringstream ss{std::string(phones)};
      std::string p;
      while (ss >> p) out.push_back(p);
    };
    std::string w;
    for (char c : word)
      if (c != '\'') w += c;
    std::size_t i = 0;
    if (w.size() > 2 && (w.rfind("kn", 0) == 0 || w.rfind("wr", 0) == 0)) i = 1;
    while (i < w.size()) {
      bool matched = false;
      for (const auto& r : rules) {
        if (w.compare(i, r.graph.size(), r.graph) == 0) {
          emit(r.phones);
          i += r.graph.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
      const char c = w[i];
      const char next = i + 1 < w.size() ? w[i + 1] : '\0';
      const bool soft = next == 'e' || next == 'i' || next == 'y';
      switch (c) {
        case 'a': emit("AE"); break;
        case 'b': emit("B"); break;
        case 'c': emit(soft ? "S" : "K"); break;
        case 'd': emit("D"); break;
        case 'e':
          if (!(i + 1 == w.size() && w.size() > 2)) emit("EH");
          break;
        case 'f': emit("F"); break;
        case 'g': emit(soft ? "JH" : "G"); break;
        case 'h': emit("HH"); break;
        case 'i': emit("IH"); break;
        case 'j': emit("JH"); break;
        case 'k': emit("K"); break;
        case 'l': emit("L"); break;
        case 'm': emit("M"); break;
        case 'n': emit("N"); break;
        case 'o': emit("AA"); break;
        case 'p': emit("P"); break;
        case 'q': emit("K"); break;
        case 'r': emit("R"); break;
        case 's': emit("S"); break;
        case 't': emit("T"); break;
        case 'u': emit("AH"); break;
        case 'v': emit("V"); break;
        case 'w': emit("W"); break;
        case 'x': emit("K S"); break;
        case 'y': emit(i == 0 ? "Y" : (i + 1 == w.size() ? "IY" : "IH")); break;
        case 'z': emit("Z"); break;
        default: break;
      }
      ++i;
    }
    if (out.empty()) out.push_back("AH");
    return out;
  }

 private:
  void load_core_lexicon() {
    static const char* kCore =
        "a AH\nan AE N\nand AE N D\nare AA R\nas AE Z\nasked AE S K T\nat AE T\nbe B IY\n"
        "been B IH N\nbook B UH K\nbut B AH T\nby B AY\ncould K UH D\nday D EY\ndo D UW\n"
        "for F AO R\nfrom F R AH M\ngood G UH D\nhad HH AE D\nhas HH AE Z\nhave HH AE V\n"
        "he HH IY\nher HH ER\nhim HH IH M\nhis HH IH Z\nhouse HH AW S\nhow HH AW\ni AY\n"
        "in IH N\ninto IH N T UW\nis IH Z\nit IH T\nits IH T S\nknow N OW\nlike L AY K\n"
        "little L IH T AH L\nmade M EY D\nman M AE N\nmary M EH R IY\nme M IY\nmore M AO R\n"
        "my M AY\nno N OW\nnot N AA T\nnow N AW\nof AH V\non AA N\none W AH N\nonly OW N L IY\n"
        "or AO R\nother AH DH ER\nout AW T\nover OW V ER\npeople P IY P AH L\nsaid S EH D\n"
        "see S IY\nshe SH IY\nso S OW\nsome S AH M\nthan DH AE N\nthat DH AE T\nthe DH AH\n"
        "their DH EH R\nthem DH EH M\nthen DH EH N\nthere DH EH R\nthey DH EY\nthis DH IH S\n"
        "time T AY M\nto T UW\ntwo T UW\nup AH P\nus AH S\nvery V EH R IY\nwas W AA Z\n"
        "water W AO T ER\nway W EY\nwe W IY\nwere W ER\nwhat W AH T\nwhen W EH N\n"
        "where W EH R\nwhich W IH CH\nwho HH UW\nwill W IH L\nwith W IH DH\nword W ER D\n"
        "would W UH D\nyear Y IH R\nyou Y UW\nyour Y AO R\nzero Z IY R OW\nthree TH R IY\n"
        "four F AO R\nfive F AY V\nsix S IH K S\nseven S EH V AH N\neight EY T\nnine N AY N\n"
        "hello HH AH L OW\nworld W ER L D\nspeech S P IY CH\nvoice V OY S\n";
    std::istringstream ss(kCore);
    std::string line;
    while (std::getline(ss, line)) {
      std::istringstream ls(line);
      std::string word, p;
      ls >> word;
      std::vector<std::string> phones;
      while (ls >> p) phones.push_back(p);
      lexicon_[word] = std::move(phones);
    }
  }

  G2POptions opts_;
  std::unordered_map<std::string, std::vector<std::string>> lexicon_;
};

}  // namespace cuctts::text

#endif  // CUCTTS_G2P_HPP_
