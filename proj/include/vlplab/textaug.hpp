#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "vlplab/rng.hpp"

namespace vlplab {

// Whitespace token list after lowercasing and stripping punctuation at token
// boundaries.
using TokenSequence = std::vector<std::string>;

struct StopwordSet {
  std::set<std::string> words;

  bool contains(const std::string& w) const { return words.count(w) > 0; }
  // UTF-8 file, one word per line, '#' comments.
  static StopwordSet from_file(const std::string& path);
  static StopwordSet builtin();
};

struct Thesaurus {
  // Deterministic iteration order; self-synonyms are dropped at load, and an
  // entry whose only synonym was the word itself is removed entirely.
  std::map<std::string, std::vector<std::string>> entries;

  const std::vector<std::string>* lookup(const std::string& w) const;
  // UTF-8 lines "word<TAB>syn1,syn2,...", '#' comments.
  static Thesaurus from_file(const std::string& path);
  static Thesaurus builtin();
};

struct TextAugConfig {
  double stopword_prob = 0.8;
  double eda_intensity = 0.1;  // n = max(1, round(intensity * len)) for replace/swap
  double deletion_prob = 0.1;
  StopwordSet stopwords = StopwordSet::builtin();
  Thesaurus thesaurus = Thesaurus::builtin();
};

enum class TextMode { Weak, Strong };
enum class EdaOp { SynonymReplacement, RandomSwap, RandomDeletion };

TokenSequence tokenize(const std::string& caption);

// Each stop-word token is independently removed with probability prob;
// non-stop-words are always kept. If removal would empty the sequence, the
// first input token is kept.
TokenSequence remove_stopwords(const TokenSequence& t, double prob, const StopwordSet& stopwords,
                               Rng& rng);

// Up to n_replace uniformly chosen non-stop-word tokens get a uniformly
// chosen synonym; tokens without a thesaurus entry are skipped.
TokenSequence synonym_replacement(const TokenSequence& t, int n_replace,
                                  const Thesaurus& thesaurus, const StopwordSet& stopwords,
                                  Rng& rng);

// n_swaps exchanges of two distinct uniformly chosen positions; the token
// multiset is preserved. No-op for sequences shorter than 2.
TokenSequence random_swap(const TokenSequence& t, int n_swaps, Rng& rng);

// Each token independently deleted with probability prob; if every token
// would go, one uniformly chosen token is kept.
TokenSequence random_deletion(const TokenSequence& t, double prob, Rng& rng);

// One EDA branch drawn with probabilities [0.4, 0.4, 0.2].
EdaOp draw_eda_op(Rng& rng);

// Sample one caption uniformly, remove stop-words, and in strong mode apply
// one drawn EDA transform. Throws EmptyCaptionList.
TokenSequence augment_text(const std::vector<std::string>& captions, TextMode mode,
                           const TextAugConfig& cfg, Rng& rng);

}  // namespace vlplab
