#include "posg/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "posg/rng.hpp"

namespace posg::corpus {

namespace {

bool has_whitespace(const std::string& s) {
  return s.find_first_of(" \t\r\n\v\f") != std::string::npos;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

TaggedCorpus parse_tagged_corpus(std::istream& input) {
  TaggedCorpus corpus;
  std::vector<TaggedToken> current;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    strip_cr(line);
    if (!line.empty() && line[0] == '#') continue;
    if (line.empty()) {
      if (!current.empty()) {
        corpus.sequences.push_back(std::move(current));
        current.clear();
      }
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("line " + std::to_string(line_no) + ": expected <surface>\\t<tag>");
    std::string surface = line.substr(0, tab);
    std::string tag = line.substr(tab + 1);
    if (surface.empty())
      throw DataError("line " + std::to_string(line_no) + ": empty surface field");
    if (tag.empty()) throw DataError("line " + std::to_string(line_no) + ": empty tag field");
    if (has_whitespace(surface) || has_whitespace(tag))
      throw DataError("line " + std::to_string(line_no) + ": whitespace inside field");
    current.push_back(TaggedToken{std::move(surface), std::move(tag)});
  }
  if (!current.empty()) corpus.sequences.push_back(std::move(current));
  if (corpus.sequences.empty()) throw DataError("empty corpus: no sequences found");
  return corpus;
}

void write_tagged_corpus(const TaggedCorpus& corpus, std::ostream& output) {
  for (std::size_t i = 0; i < corpus.sequences.size(); ++i) {
    for (const auto& token : corpus.sequences[i]) output << token.surface << '\t' << token.tag << '\n';
    if (i + 1 < corpus.sequences.size()) output << '\n';
  }
}

TaggedCorpus load_tagged_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path);
  return parse_tagged_corpus(in);
}

void save_tagged_corpus(const TaggedCorpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  write_tagged_corpus(corpus, out);
}

bool PosPartition::contains(std::int32_t token, std::int32_t pos) const {
  if (pos < 0 || static_cast<std::size_t>(pos) >= members.size()) return false;
  const auto& cell = members[static_cast<std::size_t>(pos)];
  return std::binary_search(cell.begin(), cell.end(), token);
}

void PosPartition::check() const {
  std::vector<bool> covered(tag_sets.size(), false);
  for (std::size_t p = 0; p < members.size(); ++p) {
    const auto& cell = members[p];
    if (cell.empty()) throw InvalidArgument("partition cell " + std::to_string(p) + " is empty");
    for (std::size_t i = 0; i < cell.size(); ++i) {
      if (i > 0 && cell[i] <= cell[i - 1])
        throw InvalidArgument("partition cell " + std::to_string(p) + " not sorted/unique");
      const auto token = static_cast<std::size_t>(cell[i]);
      if (token >= tag_sets.size()) throw InvalidArgument("partition references unknown token id");
      covered[token] = true;
      const auto& tags = tag_sets[token];
      if (!std::binary_search(tags.begin(), tags.end(), static_cast<std::int32_t>(p)))
        throw InvalidArgument("member/tag_set disagreement for token " + std::to_string(cell[i]));
    }
  }
  for (std::size_t x = 0; x < tag_sets.size(); ++x) {
    if (!covered[x]) throw InvalidArgument("token " + std::to_string(x) + " not in any cell");
    for (const auto pos : tag_sets[x]) {
      if (pos < 0 || static_cast<std::size_t>(pos) >= members.size())
        throw InvalidArgument("tag_set references unknown pos id");
      const auto& cell = members[static_cast<std::size_t>(pos)];
      if (!std::binary_search(cell.begin(), cell.end(), static_cast<std::int32_t>(x)))
        throw InvalidArgument("tag_set/member disagreement for token " + std::to_string(x));
    }
  }
}

Lexicon build_lexicon(const TaggedCorpus& corpus, std::size_t max_vocab, std::int64_t min_freq) {
  if (corpus.sequences.empty()) throw InvalidArgument("build_lexicon: empty corpus");
  if (max_vocab < 4) throw InvalidArgument("build_lexicon: max_vocab must be at least 4");

  // Count surfaces and (surface, tag) pairs.
  std::map<std::string, std::int64_t> surface_counts;
  std::map<std::string, std::map<std::string, std::int64_t>> pair_counts;
  std::map<std::string, std::int64_t> observed_tags;
  for (const auto& seq : corpus.sequences) {
    if (seq.empty()) throw InvalidArgument("build_lexicon: empty sequence in corpus");
    for (const auto& tok : seq) {
      surface_counts[tok.surface] += 1;
      pair_counts[tok.surface][tok.tag] += 1;
      observed_tags[tok.tag] += 1;
    }
  }

  // The special markers are reserved ids; corpus occurrences of the marker
  // strings fold into them rather than becoming ordinary tokens.
  const std::vector<std::string> special_surfaces = {kUnkSurface, kBosSurface, kEosSurface,
                                                     kPadSurface};
  for (const auto& s : special_surfaces) {
    surface_counts.erase(s);
    pair_counts.erase(s);
  }

  std::vector<std::pair<std::string, std::int64_t>> ranked;
  ranked.reserve(surface_counts.size());
  for (const auto& [surface, count] : surface_counts)
    if (count >= min_freq) ranked.emplace_back(surface, count);
  if (ranked.empty()) throw DataError("build_lexicon: corpus empty after frequency filtering");
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_vocab - 4) ranked.resize(max_vocab - 4);

  Lexicon lex;
  auto& vocab = lex.vocab;
  vocab.id_to_token = {kUnkSurface, kBosSurface, kEosSurface, kPadSurface};
  for (const auto& [surface, count] : ranked) vocab.id_to_token.push_back(surface);
  for (std::int32_t id = 0; id < vocab.size(); ++id) vocab.token_to_id[vocab.id_to_token[id]] = id;

  auto& inv = lex.inventory;
  for (const auto& [tag, count] : observed_tags)
    if (tag != kSpecialTag) inv.id_to_tag.push_back(tag);
  std::sort(inv.id_to_tag.begin(), inv.id_to_tag.end());
  inv.id_to_tag.push_back(kSpecialTag);
  for (std::int32_t id = 0; id < inv.size(); ++id) inv.tag_to_id[inv.id_to_tag[id]] = id;
  inv.special = inv.lookup(kSpecialTag);

  const auto n_tokens = static_cast<std::size_t>(vocab.size());
  const auto n_tags = static_cast<std::size_t>(inv.size());
  lex.tag_counts.assign(n_tokens, {});
  lex.token_counts.assign(n_tokens, 0);
  lex.partition.members.assign(n_tags, {});
  lex.partition.tag_sets.assign(n_tokens, {});

  for (std::int32_t id : {vocab.unk, vocab.bos, vocab.eos, vocab.pad}) {
    lex.partition.members[static_cast<std::size_t>(inv.special)].push_back(id);
    lex.partition.tag_sets[static_cast<std::size_t>(id)].push_back(inv.special);
    lex.tag_counts[static_cast<std::size_t>(id)].emplace_back(inv.special, 0);
  }

  for (const auto& [surface, tags] : pair_counts) {
    const auto it = vocab.token_to_id.find(surface);
    if (it == vocab.token_to_id.end()) continue;  // folded into UNK
    const std::int32_t token = it->second;
    for (const auto& [tag, count] : tags) {
      const std::int32_t pos = inv.lookup(tag);
      lex.partition.members[static_cast<std::size_t>(pos)].push_back(token);
      lex.partition.tag_sets[static_cast<std::size_t>(token)].push_back(pos);
      lex.tag_counts[static_cast<std::size_t>(token)].emplace_back(pos, count);
      lex.token_counts[static_cast<std::size_t>(token)] += count;
    }
  }

  for (auto& cell : lex.partition.members) {
    std::sort(cell.begin(), cell.end());
    cell.erase(std::unique(cell.begin(), cell.end()), cell.end());
  }
  for (auto& tags : lex.partition.tag_sets) {
    std::sort(tags.begin(), tags.end());
    tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
  }
  for (auto& counts : lex.tag_counts) std::sort(counts.begin(), counts.end());

  // A tag observed only on surfaces that fell out of the vocabulary would
  // leave an empty cell; fold such occurrences away by dropping the cell is
  // not possible with dense ids, so give the cell UNK as a member.
  for (std::size_t p = 0; p < lex.partition.members.size(); ++p) {
    if (lex.partition.members[p].empty()) {
      lex.partition.members[p].push_back(vocab.unk);
      auto& tags = lex.partition.tag_sets[static_cast<std::size_t>(vocab.unk)];
      tags.insert(std::lower_bound(tags.begin(), tags.end(), static_cast<std::int32_t>(p)),
                  static_cast<std::int32_t>(p));
    }
  }

  lex.partition.check();
  return lex;
}

std::int32_t most_frequent_tag(const Lexicon& lexicon, std::int32_t token) {
  const auto& vocab = lexicon.vocab;
  if (token < 0 || token >= vocab.size())
    throw InvalidArgument("most_frequent_tag: token id out of range");
  if (vocab.is_special(token)) return lexicon.inventory.special;
  const auto& counts = lexicon.tag_counts[static_cast<std::size_t>(token)];
  if (counts.empty()) return lexicon.inventory.special;
  std::int32_t best_pos = counts.front().first;
  std::int64_t best_count = counts.front().second;
  for (const auto& [pos, count] : counts) {
    if (count > best_count) {  // ties keep the lower pos id (counts sorted by pos)
      best_count = count;
      best_pos = pos;
    }
  }
  return best_pos;
}

std::vector<std::int32_t> tag_with_lexicon(const Lexicon& lexicon,
                                           const std::vector<std::int32_t>& tokens) {
  std::vector<std::int32_t> tags;
  tags.reserve(tokens.size());
  for (const auto token : tokens) tags.push_back(most_frequent_tag(lexicon, token));
  return tags;
}

void SyntheticGrammar::check() const {
  if (templates.empty()) throw InvalidArgument("grammar: no templates");
  for (const auto& tmpl : templates) {
    if (!(tmpl.weight > 0.0)) throw InvalidArgument("grammar: non-positive template weight");
    if (tmpl.tags.empty()) throw InvalidArgument("grammar: empty template");
    for (const auto& tag : tmpl.tags) {
      const auto it = lexicon.find(tag);
      if (it == lexicon.end() || it->second.empty())
        throw InvalidArgument("grammar: template tag '" + tag + "' has no lexicon entries");
    }
  }
  for (const auto& [tag, entries] : lexicon)
    for (const auto& entry : entries)
      if (!(entry.weight > 0.0))
        throw InvalidArgument("grammar: non-positive token weight under tag '" + tag + "'");
}

TaggedCorpus generate_synthetic_corpus(const SyntheticGrammar& grammar, std::size_t n_sequences,
                                       std::uint64_t seed) {
  grammar.check();
  if (n_sequences == 0) throw InvalidArgument("generate_synthetic_corpus: n_sequences must be >= 1");

  std::vector<double> template_weights;
  template_weights.reserve(grammar.templates.size());
  for (const auto& tmpl : grammar.templates) template_weights.push_back(tmpl.weight);

  std::map<std::string, std::vector<double>> entry_weights;
  for (const auto& [tag, entries] : grammar.lexicon) {
    auto& weights = entry_weights[tag];
    weights.reserve(entries.size());
    for (const auto& entry : entries) weights.push_back(entry.weight);
  }

  Rng rng(seed);
  TaggedCorpus corpus;
  corpus.sequences.reserve(n_sequences);
  for (std::size_t i = 0; i < n_sequences; ++i) {
    const auto& tmpl = grammar.templates[rng.discrete(template_weights)];
    std::vector<TaggedToken> seq;
    seq.reserve(tmpl.tags.size());
    for (const auto& tag : tmpl.tags) {
      const auto& entries = grammar.lexicon.at(tag);
      const auto& surface = entries[rng.discrete(entry_weights.at(tag))].surface;
      seq.push_back(TaggedToken{surface, tag});
    }
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

SyntheticGrammar parse_grammar(std::istream& input) {
  SyntheticGrammar grammar;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind == "template") {
      SyntheticGrammar::Template tmpl;
      if (!(fields >> tmpl.weight))
        throw DataError("grammar line " + std::to_string(line_no) + ": missing template weight");
      std::string tag;
      while (fields >> tag) tmpl.tags.push_back(tag);
      if (tmpl.tags.empty())
        throw DataError("grammar line " + std::to_string(line_no) + ": template without tags");
      grammar.templates.push_back(std::move(tmpl));
    } else if (kind == "tok") {
      std::string tag, surface;
      double weight = 0.0;
      if (!(fields >> tag >> surface >> weight))
        throw DataError("grammar line " + std::to_string(line_no) +
                        ": expected `tok <TAG> <surface> <weight>`");
      grammar.lexicon[tag].push_back(SyntheticGrammar::LexEntry{surface, weight});
    } else {
      throw DataError("grammar line " + std::to_string(line_no) + ": unknown directive '" + kind +
                      "'");
    }
  }
  grammar.check();
  return grammar;
}

void write_grammar(const SyntheticGrammar& grammar, std::ostream& output) {
  for (const auto& tmpl : grammar.templates) {
    output << "template " << tmpl.weight;
    for (const auto& tag : tmpl.tags) output << ' ' << tag;
    output << '\n';
  }
  for (const auto& [tag, entries] : grammar.lexicon)
    for (const auto& entry : entries)
      output << "tok " << tag << ' ' << entry.surface << ' ' << entry.weight << '\n';
}

SyntheticGrammar load_grammar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open grammar file: " + path);
  return parse_grammar(in);
}

namespace {

// Pronounceable pseudo-word from an index; injective for idx < 8000.
std::string pseudo_word(std::size_t idx) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                 "s", "t", "v", "z", "br", "st", "gr", "pl", "tr", "kr"};
  static const char* vowels[] = {"a", "e", "i", "o", "u"};
  std::string word;
  // three syllables, base 20*5 = 100 per syllable
  for (int s = 0; s < 2; ++s) {
    word += onsets[idx % 20];
    idx /= 20;
    word += vowels[idx % 5];
    idx /= 5;
  }
  word += onsets[idx % 20];
  word += "a";
  return word;
}

std::vector<SyntheticGrammar::LexEntry> zipf_entries(const std::vector<std::string>& surfaces,
                                                     double exponent) {
  std::vector<SyntheticGrammar::LexEntry> entries;
  entries.reserve(surfaces.size());
  for (std::size_t i = 0; i < surfaces.size(); ++i)
    entries.push_back({surfaces[i], 1.0 / std::pow(static_cast<double>(i) + 1.5, exponent)});
  return entries;
}

}  // namespace

SyntheticGrammar builtin_grammar() {
  SyntheticGrammar grammar;

  // Closed-class tags use real function words.
  grammar.lexicon["DT"] = {{"the", 45}, {"a", 22}, {"this", 8}, {"every", 4},
                           {"some", 6},  {"no", 3}, {"that", 5}, {"each", 2}};
  grammar.lexicon["IN"] = zipf_entries({"of",      "in",    "on",    "at",    "with", "from",
                                        "by",      "about", "under", "over",  "into", "after",
                                        "before",  "near",  "through", "against", "between",
                                        "without", "toward", "across", "behind", "beyond"},
                                       1.1);
  grammar.lexicon["PRP"] = zipf_entries(
      {"he", "she", "it", "they", "we", "i", "you", "him", "her", "them"}, 1.0);
  grammar.lexicon["CC"] = {{"and", 12}, {"but", 4}, {"or", 3}, {"yet", 1}, {"so", 2}};
  grammar.lexicon["PUNCT"] = {{".", 20}, {",", 10}, {";", 2}, {":", 1}};

  // Open classes are generated pseudo-words with Zipf weights. A block of
  // surfaces is shared between NN and VB, and another between JJ and VBD, so
  // the corpus has genuinely multi-POS tokens.
  std::vector<std::string> nouns, plurals, adjectives, verbs, pasts, adverbs, numbers;
  for (std::size_t i = 0; i < 500; ++i) nouns.push_back(pseudo_word(i));
  for (std::size_t i = 0; i < 200; ++i) plurals.push_back(pseudo_word(600 + i) + "s");
  for (std::size_t i = 0; i < 250; ++i) adjectives.push_back(pseudo_word(900 + i) + "ish");
  for (std::size_t i = 0; i < 200; ++i)
    verbs.push_back(i < 60 ? nouns[2 * i] : pseudo_word(1300 + i));  // 60 NN/VB overlaps
  for (std::size_t i = 0; i < 180; ++i)
    pasts.push_back(i < 30 ? adjectives[3 * i] : pseudo_word(1700 + i) + "ed");  // 30 JJ/VBD
  for (std::size_t i = 0; i < 100; ++i) adverbs.push_back(pseudo_word(2100 + i) + "ly");
  for (std::size_t i = 0; i < 80; ++i) numbers.push_back(std::to_string(3 + 7 * i));

  grammar.lexicon["NN"] = zipf_entries(nouns, 1.15);
  grammar.lexicon["NNS"] = zipf_entries(plurals, 1.15);
  grammar.lexicon["JJ"] = zipf_entries(adjectives, 1.15);
  grammar.lexicon["VB"] = zipf_entries(verbs, 1.15);
  grammar.lexicon["VBD"] = zipf_entries(pasts, 1.15);
  grammar.lexicon["RB"] = zipf_entries(adverbs, 1.15);
  grammar.lexicon["NUM"] = zipf_entries(numbers, 1.1);

  using Tags = std::vector<std::string>;
  const std::vector<Tags> sentences = {
      {"DT", "JJ", "NN", "VBD", "DT", "NN", "PUNCT"},
      {"DT", "NN", "VBD", "IN", "DT", "JJ", "NN", "PUNCT"},
      {"PRP", "VBD", "DT", "NN", "CC", "DT", "NN", "PUNCT"},
      {"DT", "NNS", "VB", "RB", "PUNCT"},
      {"IN", "DT", "NN", "PRP", "VBD", "DT", "JJ", "NNS", "PUNCT"},
      {"DT", "JJ", "JJ", "NN", "VBD", "RB", "PUNCT"},
      {"NUM", "NNS", "VBD", "IN", "DT", "NN", "PUNCT"},
      {"PRP", "VB", "DT", "JJ", "NNS", "PUNCT"},
      {"DT", "NN", "IN", "DT", "NN", "VBD", "DT", "JJ", "NN", "PUNCT"},
      {"RB", "PRP", "VBD", "DT", "NN", "IN", "NNS", "PUNCT"},
      {"DT", "NN", "CC", "DT", "NN", "VBD", "IN", "NUM", "NNS", "PUNCT"},
      {"PRP", "RB", "VB", "IN", "DT", "NN", "PUNCT"},
      {"DT", "JJ", "NN", "VBD", "NUM", "NNS", "IN", "DT", "NN", "PUNCT"},
      {"NNS", "VB", "CC", "NNS", "VB", "PUNCT"},
  };

  // Paragraph templates: 8..12 sentences chained per template, drawn with a
  // fixed internal seed so the grammar is a constant of the artifact.
  Rng rng(0x705347u);  // arbitrary fixed constant
  for (int t = 0; t < 160; ++t) {
    SyntheticGrammar::Template tmpl;
    tmpl.weight = 1.0 + rng.uniform01() * 3.0;
    const auto n_sentences = static_cast<std::size_t>(rng.uniform_int(8, 12));
    for (std::size_t s = 0; s < n_sentences; ++s) {
      const auto& sentence = sentences[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(sentences.size()) - 1))];
      tmpl.tags.insert(tmpl.tags.end(), sentence.begin(), sentence.end());
    }
    grammar.templates.push_back(std::move(tmpl));
  }

  grammar.check();
  return grammar;
}

std::vector<EncodedSequence> encode_corpus(const TaggedCorpus& corpus, const Lexicon& lexicon) {
  std::vector<EncodedSequence> encoded;
  encoded.reserve(corpus.sequences.size());
  const auto& vocab = lexicon.vocab;
  const auto& inv = lexicon.inventory;
  for (const auto& seq : corpus.sequences) {
    EncodedSequence out;
    out.tokens.reserve(seq.size() + 2);
    out.pos.reserve(seq.size() + 2);
    out.tokens.push_back(vocab.bos);
    out.pos.push_back(inv.special);
    for (const auto& tok : seq) {
      const std::int32_t token = vocab.lookup(tok.surface);
      std::int32_t pos;
      if (vocab.is_special(token)) {
        pos = inv.special;
      } else {
        pos = inv.lookup(tok.tag);
        if (pos < 0 || !lexicon.partition.contains(token, pos))
          pos = most_frequent_tag(lexicon, token);
      }
      out.tokens.push_back(token);
      out.pos.push_back(pos);
    }
    out.tokens.push_back(vocab.eos);
    out.pos.push_back(inv.special);
    encoded.push_back(std::move(out));
  }
  return encoded;
}

namespace {

using Json = nlohmann::ordered_json;

}  // namespace

void save_lexicon(const Lexicon& lexicon, const std::string& path) {
  Json doc;
  doc["format"] = "posg-lexicon";
  doc["version"] = 1;
  doc["tokens"] = lexicon.vocab.id_to_token;
  doc["specials"] = {{"unk", lexicon.vocab.unk},
                     {"bos", lexicon.vocab.bos},
                     {"eos", lexicon.vocab.eos},
                     {"pad", lexicon.vocab.pad}};
  doc["tags"] = lexicon.inventory.id_to_tag;
  doc["special_tag"] = lexicon.inventory.special;
  doc["members"] = lexicon.partition.members;
  Json counts = Json::array();
  for (const auto& per_token : lexicon.tag_counts) {
    Json row = Json::array();
    for (const auto& [pos, count] : per_token) row.push_back(Json::array({pos, count}));
    counts.push_back(std::move(row));
  }
  doc["tag_counts"] = std::move(counts);
  doc["token_counts"] = lexicon.token_counts;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write lexicon file: " + path);
  out << doc.dump(2) << '\n';
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open lexicon file: " + path);
  Json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw DataError("lexicon parse error in " + path + ": " + e.what());
  }
  if (doc.value("format", "") != "posg-lexicon")
    throw DataError("not a lexicon file: " + path);
  if (doc.value("version", 0) != 1) throw DataError("unsupported lexicon version in " + path);

  Lexicon lex;
  lex.vocab.id_to_token = doc.at("tokens").get<std::vector<std::string>>();
  for (std::int32_t id = 0; id < lex.vocab.size(); ++id)
    lex.vocab.token_to_id[lex.vocab.id_to_token[static_cast<std::size_t>(id)]] = id;
  lex.vocab.unk = doc.at("specials").at("unk").get<std::int32_t>();
  lex.vocab.bos = doc.at("specials").at("bos").get<std::int32_t>();
  lex.vocab.eos = doc.at("specials").at("eos").get<std::int32_t>();
  lex.vocab.pad = doc.at("specials").at("pad").get<std::int32_t>();
  lex.inventory.id_to_tag = doc.at("tags").get<std::vector<std::string>>();
  for (std::int32_t id = 0; id < lex.inventory.size(); ++id)
    lex.inventory.tag_to_id[lex.inventory.id_to_tag[static_cast<std::size_t>(id)]] = id;
  lex.inventory.special = doc.at("special_tag").get<std::int32_t>();
  lex.partition.members = doc.at("members").get<std::vector<std::vector<std::int32_t>>>();
  lex.partition.tag_sets.assign(static_cast<std::size_t>(lex.vocab.size()), {});
  for (std::size_t p = 0; p < lex.partition.members.size(); ++p)
    for (const auto token : lex.partition.members[p])
      lex.partition.tag_sets[static_cast<std::size_t>(token)].push_back(
          static_cast<std::int32_t>(p));
  for (const auto& row : doc.at("tag_counts")) {
    std::vector<std::pair<std::int32_t, std::int64_t>> per_token;
    for (const auto& pair : row)
      per_token.emplace_back(pair.at(0).get<std::int32_t>(), pair.at(1).get<std::int64_t>());
    lex.tag_counts.push_back(std::move(per_token));
  }
  lex.token_counts = doc.at("token_counts").get<std::vector<std::int64_t>>();
  if (lex.tag_counts.size() != static_cast<std::size_t>(lex.vocab.size()) ||
      lex.token_counts.size() != static_cast<std::size_t>(lex.vocab.size()))
    throw DataError("lexicon field sizes disagree in " + path);
  lex.partition.check();
  return lex;
}

std::pair<PosInventory, PosPartition> single_tag_partition(const Vocabulary& vocab) {
  PosInventory inv;
  inv.id_to_tag = {"ONLY"};
  inv.tag_to_id["ONLY"] = 0;
  inv.special = 0;
  PosPartition partition;
  partition.members.resize(1);
  auto& cell = partition.members[0];
  cell.resize(static_cast<std::size_t>(vocab.size()));
  for (std::int32_t id = 0; id < vocab.size(); ++id) cell[static_cast<std::size_t>(id)] = id;
  partition.tag_sets.assign(static_cast<std::size_t>(vocab.size()), {0});
  return {std::move(inv), std::move(partition)};
}

}  // namespace posg::corpus
