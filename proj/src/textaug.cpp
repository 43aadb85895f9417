#include "vlplab/textaug.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vlplab/errors.hpp"

namespace vlplab {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

StopwordSet StopwordSet::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::IoError, "cannot open stop-word file: " + path);
  StopwordSet out;
  std::string line;
  while (std::getline(is, line)) {
    std::string w = trim(line);
    if (w.empty() || w[0] == '#') continue;
    out.words.insert(w);
  }
  return out;
}

StopwordSet StopwordSet::builtin() {
  StopwordSet out;
  for (const char* w :
       {"a",   "an", "and", "are",  "as",  "at",   "be",   "by", "for", "from", "in",  "is",
        "it",  "its", "of",  "on",  "one", "or",   "that", "the", "this", "to",  "was",
        "were", "with"})
    out.words.insert(w);
  return out;
}

const std::vector<std::string>* Thesaurus::lookup(const std::string& w) const {
  auto it = entries.find(w);
  return it == entries.end() ? nullptr : &it->second;
}

Thesaurus Thesaurus::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::IoError, "cannot open thesaurus file: " + path);
  Thesaurus out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string l = trim(line);
    if (l.empty() || l[0] == '#') continue;
    size_t tab = l.find('\t');
    if (tab == std::string::npos)
      throw Error(Errc::CorruptRecord,
                  "thesaurus line " + std::to_string(lineno) + " is missing a tab");
    std::string word = trim(l.substr(0, tab));
    std::vector<std::string> syns;
    for (const auto& s : split(l.substr(tab + 1), ',')) {
      std::string syn = trim(s);
      if (!syn.empty() && syn != word) syns.push_back(syn);
    }
    if (!word.empty() && !syns.empty()) out.entries[word] = std::move(syns);
  }
  return out;
}

Thesaurus Thesaurus::builtin() {
  Thesaurus t;
  auto put = [&](const char* w, std::vector<std::string> syns) {
    t.entries[w] = std::move(syns);
  };
  put("photo", {"picture", "snapshot", "shot"});
  put("picture", {"photo", "snapshot"});
  put("image", {"picture", "depiction"});
  put("shows", {"depicts", "presents"});
  put("small", {"little", "tiny"});
  put("large", {"big", "sizable"});
  put("red", {"crimson", "scarlet"});
  put("green", {"emerald", "verdant"});
  put("blue", {"azure", "cobalt"});
  put("circle", {"disk", "round"});
  put("square", {"box", "quad"});
  put("triangle", {"wedge", "trigon"});
  put("background", {"backdrop", "setting"});
  put("gray", {"grey", "ashen"});
  put("noisy", {"grainy", "speckled"});
  put("bright", {"vivid", "luminous"});
  put("single", {"lone", "solitary"});
  return t;
}

TokenSequence tokenize(const std::string& caption) {
  TokenSequence out;
  std::istringstream is(caption);
  std::string raw;
  while (is >> raw) {
    size_t b = 0, e = raw.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(raw[e - 1]))) --e;
    if (b >= e) continue;
    std::string tok = raw.substr(b, e - b);
    for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(std::move(tok));
  }
  return out;
}

TokenSequence remove_stopwords(const TokenSequence& t, double prob, const StopwordSet& stopwords,
                               Rng& rng) {
  TokenSequence out;
  out.reserve(t.size());
  for (const auto& tok : t) {
    if (stopwords.contains(tok) && rng.bernoulli(prob)) continue;
    out.push_back(tok);
  }
  if (out.empty() && !t.empty()) out.push_back(t.front());
  return out;
}

TokenSequence synonym_replacement(const TokenSequence& t, int n_replace,
                                  const Thesaurus& thesaurus, const StopwordSet& stopwords,
                                  Rng& rng) {
  if (n_replace <= 0 || t.empty()) return t;
  TokenSequence out = t;
  std::vector<size_t> candidates;
  for (size_t i = 0; i < t.size(); ++i)
    if (!stopwords.contains(t[i])) candidates.push_back(i);
  // Seeded Fisher-Yates; walk the shuffled candidates and skip tokens the
  // thesaurus does not know.
  for (size_t i = candidates.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.uniform_int(i));
    std::swap(candidates[i - 1], candidates[j]);
  }
  int replaced = 0;
  for (size_t idx : candidates) {
    if (replaced >= n_replace) break;
    const auto* syns = thesaurus.lookup(out[idx]);
    if (!syns) continue;
    out[idx] = (*syns)[static_cast<size_t>(rng.uniform_int(syns->size()))];
    ++replaced;
  }
  return out;
}

TokenSequence random_swap(const TokenSequence& t, int n_swaps, Rng& rng) {
  if (t.size() < 2 || n_swaps <= 0) return t;
  TokenSequence out = t;
  const uint64_t n = out.size();
  for (int s = 0; s < n_swaps; ++s) {
    uint64_t i = rng.uniform_int(n);
    uint64_t j = (i + 1 + rng.uniform_int(n - 1)) % n;  // distinct from i by construction
    std::swap(out[i], out[j]);
  }
  return out;
}

TokenSequence random_deletion(const TokenSequence& t, double prob, Rng& rng) {
  if (t.empty()) return t;
  if (prob < 0.0 || prob > 1.0) throw Error(Errc::BadConfig, "deletion prob must be in [0,1]");
  std::vector<bool> keep(t.size());
  bool any = false;
  for (size_t i = 0; i < t.size(); ++i) {
    keep[i] = !rng.bernoulli(prob);
    any = any || keep[i];
  }
  TokenSequence out;
  if (!any) {
    out.push_back(t[rng.uniform_int(t.size())]);
    return out;
  }
  for (size_t i = 0; i < t.size(); ++i)
    if (keep[i]) out.push_back(t[i]);
  return out;
}

EdaOp draw_eda_op(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.4) return EdaOp::SynonymReplacement;
  if (u < 0.8) return EdaOp::RandomSwap;
  return EdaOp::RandomDeletion;
}

TokenSequence augment_text(const std::vector<std::string>& captions, TextMode mode,
                           const TextAugConfig& cfg, Rng& rng) {
  if (captions.empty()) throw Error(Errc::EmptyCaptionList, "augment_text needs >= 1 caption");
  const std::string& chosen = captions[rng.uniform_int(captions.size())];
  TokenSequence toks = remove_stopwords(tokenize(chosen), cfg.stopword_prob, cfg.stopwords, rng);
  if (mode == TextMode::Weak) return toks;
  // intensity 0 disables the count-based transforms entirely; positive
  // intensities floor at one edit
  const int n = cfg.eda_intensity <= 0.0
                    ? 0
                    : std::max(1, static_cast<int>(std::lround(
                                      cfg.eda_intensity * static_cast<double>(toks.size()))));
  switch (draw_eda_op(rng)) {
    case EdaOp::SynonymReplacement:
      return synonym_replacement(toks, n, cfg.thesaurus, cfg.stopwords, rng);
    case EdaOp::RandomSwap:
      return random_swap(toks, n, rng);
    case EdaOp::RandomDeletion:
      return random_deletion(toks, cfg.deletion_prob, rng);
  }
  return toks;
}

}  // namespace vlplab
