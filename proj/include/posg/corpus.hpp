#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "posg/errors.hpp"

namespace posg::corpus {

struct TaggedToken {
  std::string surface;
  std::string tag;
};

struct TaggedCorpus {
  std::vector<std::vector<TaggedToken>> sequences;

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& seq : sequences) n += seq.size();
    return n;
  }
};

// One record per line as `<surface>\t<tag>`; an empty line ends a sequence;
// lines starting with '#' are comments. Throws DataError with the line number
// of the first malformed record.
TaggedCorpus parse_tagged_corpus(std::istream& input);
void write_tagged_corpus(const TaggedCorpus& corpus, std::ostream& output);

TaggedCorpus load_tagged_corpus(const std::string& path);
void save_tagged_corpus(const TaggedCorpus& corpus, const std::string& path);

constexpr const char* kUnkSurface = "<unk>";
constexpr const char* kBosSurface = "<bos>";
constexpr const char* kEosSurface = "<eos>";
constexpr const char* kPadSurface = "<pad>";
constexpr const char* kSpecialTag = "SPECIAL";

struct Vocabulary {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, std::int32_t> token_to_id;
  std::int32_t unk = 0;
  std::int32_t bos = 1;
  std::int32_t eos = 2;
  std::int32_t pad = 3;

  std::int32_t size() const { return static_cast<std::int32_t>(id_to_token.size()); }

  // In-vocabulary id, or UNK.
  std::int32_t lookup(const std::string& token) const {
    const auto it = token_to_id.find(token);
    return it == token_to_id.end() ? unk : it->second;
  }

  bool is_special(std::int32_t id) const { return id == unk || id == bos || id == eos || id == pad; }
};

struct PosInventory {
  std::vector<std::string> id_to_tag;
  std::unordered_map<std::string, std::int32_t> tag_to_id;
  std::int32_t special = 0;  // id of the reserved SPECIAL tag

  std::int32_t size() const { return static_cast<std::int32_t>(id_to_tag.size()); }

  std::int32_t lookup(const std::string& tag) const {
    const auto it = tag_to_id.find(tag);
    return it == tag_to_id.end() ? -1 : it->second;
  }
};

// The vocabulary split by tag: members[p] lists every token observed under
// tag p, tag_sets[x] lists every tag token x was observed under. The two
// views are kept mutually consistent.
struct PosPartition {
  std::vector<std::vector<std::int32_t>> members;   // per pos id, sorted token ids
  std::vector<std::vector<std::int32_t>> tag_sets;  // per token id, sorted pos ids

  bool contains(std::int32_t token, std::int32_t pos) const;
  void check() const;  // throws InvalidArgument on any violated invariant
};

// Everything derived from one ingested training corpus.
struct Lexicon {
  Vocabulary vocab;
  PosInventory inventory;
  PosPartition partition;
  // Per token id: (pos id, count) pairs sorted by pos id. Source of the
  // most-frequent-tag annotation of generated text.
  std::vector<std::vector<std::pair<std::int32_t, std::int64_t>>> tag_counts;
  // Per token id: total training-corpus count (specials get 0).
  std::vector<std::int64_t> token_counts;
};

// Builds vocabulary, inventory and partition. Tokens are ranked by frequency
// (ties lexicographic), capped at max_vocab total ids including the four
// specials; tokens below min_freq fold into UNK. SPECIAL tags the specials.
Lexicon build_lexicon(const TaggedCorpus& corpus, std::size_t max_vocab, std::int64_t min_freq);

// Most frequent training tag per token, ties toward the lower pos id;
// UNK and specials map to SPECIAL.
std::vector<std::int32_t> tag_with_lexicon(const Lexicon& lexicon,
                                           const std::vector<std::int32_t>& tokens);

// Single most-frequent tag of one token id (same rule as tag_with_lexicon).
std::int32_t most_frequent_tag(const Lexicon& lexicon, std::int32_t token);

struct SyntheticGrammar {
  struct Template {
    double weight = 1.0;
    std::vector<std::string> tags;
  };
  struct LexEntry {
    std::string surface;
    double weight = 1.0;
  };

  std::vector<Template> templates;
  std::map<std::string, std::vector<LexEntry>> lexicon;  // per tag, ordered

  void check() const;  // weights positive, every template tag has lexicon entries
};

// One sequence per template draw; deterministic for a fixed seed.
TaggedCorpus generate_synthetic_corpus(const SyntheticGrammar& grammar, std::size_t n_sequences,
                                       std::uint64_t seed);

// Grammar file: `template <weight> TAG...` and `tok <TAG> <surface> <weight>`
// lines; '#' comments and blank lines ignored.
SyntheticGrammar parse_grammar(std::istream& input);
void write_grammar(const SyntheticGrammar& grammar, std::ostream& output);
SyntheticGrammar load_grammar(const std::string& path);

// English-like desk-scale grammar: ~1500 token types over 12 tags, paragraph
// templates long enough to cut 50-token prefixes from.
SyntheticGrammar builtin_grammar();

struct EncodedSequence {
  std::vector<std::int32_t> tokens;  // BOS ... EOS
  std::vector<std::int32_t> pos;     // aligned, specials tagged SPECIAL
};

// Encodes against the lexicon. OOV tokens become (UNK, SPECIAL); a pair whose
// tag was never observed for that token in training falls back to the token's
// most frequent training tag, keeping every (token, tag) pair inside the
// partition.
std::vector<EncodedSequence> encode_corpus(const TaggedCorpus& corpus, const Lexicon& lexicon);

void save_lexicon(const Lexicon& lexicon, const std::string& path);
Lexicon load_lexicon(const std::string& path);

// A partition with a single tag covering the whole vocabulary. Not producible
// by build_lexicon (which always reserves SPECIAL); used to exercise the
// single-class reductions of the factored head.
std::pair<PosInventory, PosPartition> single_tag_partition(const Vocabulary& vocab);

}  // namespace posg::corpus
