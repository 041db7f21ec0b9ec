//
// Copyright 2026 The Grounder Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef GROUNDER_TEXTPIPE_HPP
#define GROUNDER_TEXTPIPE_HPP

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "grounder/common.hpp"

namespace grounder {

// Lexical categories used by the masking priority rules. The world vocabulary
// is closed, so a fixed lexicon gives exact tags; out-of-vocabulary words are
// tagged kOther and are never masked.
enum class LexCat {
  kNoun,
  kAdj,
  kVerb,
  kPrep,
  kConj,
  kQualifier,
  kAux,
  kPron,
  kNum,
  kOther,
};

inline const char* to_string(LexCat c) {
  switch (c) {
    case LexCat::kNoun: return "NOUN";
    case LexCat::kAdj: return "ADJ";
    case LexCat::kVerb: return "VERB";
    case LexCat::kPrep: return "PREP";
    case LexCat::kConj: return "CONJ";
    case LexCat::kQualifier: return "QUALIFIER";
    case LexCat::kAux: return "AUX";
    case LexCat::kPron: return "PRON";
    case LexCat::kNum: return "NUM";
    case LexCat::kOther: return "OTHER";
  }
  return "OTHER";
}

inline LexCat lexcat_from_string(const std::string& s) {
  if (s == "NOUN") return LexCat::kNoun;
  if (s == "ADJ") return LexCat::kAdj;
  if (s == "VERB") return LexCat::kVerb;
  if (s == "PREP") return LexCat::kPrep;
  if (s == "CONJ") return LexCat::kConj;
  if (s == "QUALIFIER") return LexCat::kQualifier;
  if (s == "AUX") return LexCat::kAux;
  if (s == "PRON") return LexCat::kPron;
  if (s == "NUM") return LexCat::kNum;
  if (s == "OTHER") return LexCat::kOther;
  throw ParseError("unknown lexical category: " + s);
}

// ---------------------------------------------------------------------------
// Vocabulary. Fixed id assignment: reserved tokens first, then the world
// vocabulary in lexicon order. Ids are part of the on-disk contract
// (checkpoints embed the table row per id), so the order must never change.
// ---------------------------------------------------------------------------

class Lexicon {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kMaskId = 1;
  static constexpr int kUnkId = 2;

  Lexicon() {
    add("<pad>", LexCat::kOther);
    add("<mask>", LexCat::kOther);
    add("<unk>", LexCat::kOther);
  }

  static Lexicon builtin() {
    Lexicon lx;
    for (const auto& [word, cat] : builtin_entries()) lx.add(word, cat);
    return lx;
  }

  // (word, category) pairs of the shapes-world lexicon.
  static std::vector<std::pair<std::string, LexCat>> builtin_entries() {
    return {
        {"the", LexCat::kQualifier},
        {"red", LexCat::kAdj},      {"green", LexCat::kAdj},
        {"blue", LexCat::kAdj},     {"yellow", LexCat::kAdj},
        {"small", LexCat::kAdj},    {"large", LexCat::kAdj},
        {"circle", LexCat::kNoun},  {"square", LexCat::kNoun},
        {"triangle", LexCat::kNoun},{"color", LexCat::kNoun},
        {"left", LexCat::kPrep},    {"right", LexCat::kPrep},
        {"above", LexCat::kPrep},   {"below", LexCat::kPrep},
        {"of", LexCat::kPrep},      {"with", LexCat::kPrep},
        {"without", LexCat::kPrep},
    };
  }

  void add(const std::string& word, LexCat cat) {
    if (id_of_.count(word)) throw ValidationError("duplicate lexicon word: " + word);
    id_of_[word] = static_cast<int>(words_.size());
    words_.push_back(word);
    cats_.push_back(cat);
  }

  int size() const { return static_cast<int>(words_.size()); }

  // Returns kUnkId for out-of-vocabulary words.
  int id(const std::string& word) const {
    auto it = id_of_.find(word);
    return it == id_of_.end() ? kUnkId : it->second;
  }
  bool contains(const std::string& word) const { return id_of_.count(word) > 0; }
  const std::string& word(int id) const { return words_[static_cast<std::size_t>(id)]; }
  LexCat cat(const std::string& word) const {
    auto it = id_of_.find(word);
    return it == id_of_.end() ? LexCat::kOther
                              : cats_[static_cast<std::size_t>(it->second)];
  }

  // Two-column plain-text form (word category), one entry per line.
  std::string serialize() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < words_.size(); ++i)
      os << words_[i] << " " << to_string(cats_[i]) << "\n";
    return os.str();
  }

  static Lexicon parse(const std::string& text) {
    Lexicon lx;
    lx.words_.clear();
    lx.cats_.clear();
    lx.id_of_.clear();
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string word, cat;
      if (!(ls >> word >> cat)) throw ParseError("bad lexicon line: " + line);
      lx.add(word, lexcat_from_string(cat));
    }
    if (lx.size() < 3 || lx.word(kPadId) != "<pad>" || lx.word(kMaskId) != "<mask>")
      throw ValidationError("lexicon must start with <pad> <mask> <unk>");
    return lx;
  }

 private:
  std::vector<std::string> words_;
  std::vector<LexCat> cats_;
  std::map<std::string, int> id_of_;
};

struct Token {
  std::string surface;
  int id = 0;
  LexCat cat = LexCat::kOther;

  bool operator==(const Token&) const = default;
};

struct TokenSeq {
  std::vector<Token> tokens;

  int length() const { return static_cast<int>(tokens.size()); }
  bool operator==(const TokenSeq&) const = default;

  std::string text() const {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) s += ' ';
      s += tokens[i].surface;
    }
    return s;
  }
};

// One full sequence plus up to three single-position masked variants.
struct MaskedSet {
  TokenSeq full;
  std::vector<TokenSeq> variants;
  std::vector<int> masked_positions;  // variants[i] masks masked_positions[i]
};

// Lowercases, splits on whitespace, tags each token via the lexicon.
inline TokenSeq tokenize(const std::string& expression, const Lexicon& lexicon) {
  TokenSeq seq;
  std::string word;
  std::istringstream is(expression);
  while (is >> word) {
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    seq.tokens.push_back({word, lexicon.id(word), lexicon.cat(word)});
  }
  if (seq.tokens.empty()) throw ValidationError("tokenize: empty expression");
  return seq;
}

namespace detail {

// Masking priority group: 1 is masked first, 3 last, 0 never.
inline int mask_group(LexCat cat) {
  switch (cat) {
    case LexCat::kPrep:
    case LexCat::kConj:
    case LexCat::kQualifier:
      return 1;
    case LexCat::kAux:
    case LexCat::kPron:
    case LexCat::kNum:
      return 2;
    case LexCat::kAdj:
    case LexCat::kVerb:
      return 3;
    default:
      return 0;  // NOUN, OTHER
  }
}

}  // namespace detail

// Selects up to three mask positions by priority group (G1 prepositions/
// conjunctions/qualifiers, then G2 auxiliaries/pronouns/numbers, then G3
// adjectives/verbs), left-to-right within a group. Nouns and OTHER are never
// masked. Before each selection the stop rule is checked over the tokens not
// yet chosen: if they are nouns only, or contain exactly one non-noun word,
// selection ends. `max_group` caps the deepest group considered (3 = full
// rules, 2 = never mask adjectives/verbs).
inline std::vector<int> select_mask_positions(const TokenSeq& full,
                                              int max_group = 3) {
  std::vector<int> chosen;
  std::vector<char> taken(static_cast<std::size_t>(full.length()), 0);
  while (static_cast<int>(chosen.size()) < 3) {
    int non_noun_remaining = 0;
    for (int i = 0; i < full.length(); ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      if (full.tokens[static_cast<std::size_t>(i)].cat != LexCat::kNoun)
        ++non_noun_remaining;
    }
    if (non_noun_remaining <= 1) break;
    int best = -1;
    int best_group = max_group + 1;
    for (int i = 0; i < full.length(); ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      int g = detail::mask_group(full.tokens[static_cast<std::size_t>(i)].cat);
      if (g == 0 || g > max_group) continue;
      if (g < best_group) {
        best_group = g;
        best = i;
      }
    }
    if (best < 0) break;  // nothing maskable left
    taken[static_cast<std::size_t>(best)] = 1;
    chosen.push_back(best);
  }
  return chosen;
}

// Builds the masked-reference set: independent single-word masks at the
// positions chosen by select_mask_positions.
inline MaskedSet mask_variants(const TokenSeq& full, int max_group = 3) {
  if (full.tokens.empty()) throw ValidationError("mask_variants: empty sequence");
  MaskedSet set;
  set.full = full;
  set.masked_positions = select_mask_positions(full, max_group);
  for (int pos : set.masked_positions) {
    TokenSeq v = full;
    v.tokens[static_cast<std::size_t>(pos)] = {"<mask>", Lexicon::kMaskId,
                                               LexCat::kOther};
    set.variants.push_back(std::move(v));
  }
  return set;
}

// Pads/validates a token sequence into fixed-length id and validity arrays.
struct PaddedIds {
  std::vector<int> ids;
  std::vector<char> valid;
};

inline PaddedIds pad_to_length(const TokenSeq& seq, int max_len) {
  if (seq.length() == 0) throw ValidationError("pad_to_length: empty sequence");
  if (seq.length() > max_len)
    throw ValidationError("expression longer than the text length limit");
  PaddedIds out;
  out.ids.assign(static_cast<std::size_t>(max_len), Lexicon::kPadId);
  out.valid.assign(static_cast<std::size_t>(max_len), 0);
  for (int i = 0; i < seq.length(); ++i) {
    out.ids[static_cast<std::size_t>(i)] = seq.tokens[static_cast<std::size_t>(i)].id;
    out.valid[static_cast<std::size_t>(i)] = 1;
  }
  return out;
}

}  // namespace grounder

#endif  // GROUNDER_TEXTPIPE_HPP
