#include "icdattn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>  // vendored nlohmann/json

#include "icdattn/errors.hpp"

namespace icdattn {

using json = nlohmann::json;

// ---- small string helpers ----------------------------------------------------

static std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

static bool iequals_at(const std::string& s, size_t pos, const char* word) {
  size_t n = std::strlen(word);
  if (pos + n > s.size()) return false;
  for (size_t i = 0; i < n; ++i) {
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != word[i]) return false;
  }
  return true;
}

// ---- extraction ----------------------------------------------------------------

// "DISCHARGE DIAGNOSIS" / "FINAL DIAGNOSIS", optional "ES", optional ":".
// Content after the colon (if any) is handed back as the first section line.
static bool is_diagnosis_header(const std::string& trimmed, std::string* rest) {
  size_t pos = 0;
  if (iequals_at(trimmed, 0, "discharge")) {
    pos = 9;
  } else if (iequals_at(trimmed, 0, "final")) {
    pos = 5;
  } else {
    return false;
  }
  size_t ws = pos;
  while (ws < trimmed.size() && std::isspace(static_cast<unsigned char>(trimmed[ws]))) ++ws;
  if (ws == pos) return false;
  if (!iequals_at(trimmed, ws, "diagnos")) return false;
  pos = ws + 7;
  if (iequals_at(trimmed, pos, "es") || iequals_at(trimmed, pos, "is")) {
    pos += 2;
  } else {
    return false;
  }
  while (pos < trimmed.size() && std::isspace(static_cast<unsigned char>(trimmed[pos]))) ++pos;
  if (pos == trimmed.size()) {
    rest->clear();
    return true;
  }
  if (trimmed[pos] == ':') {
    *rest = trim(trimmed.substr(pos + 1));
    return true;
  }
  return false;
}

// A section terminator: all-caps line ending in ':' (no lowercase letters,
// at least one uppercase).
static bool is_section_header(const std::string& trimmed) {
  if (trimmed.size() < 2 || trimmed.back() != ':') return false;
  bool has_upper = false;
  for (char ch : trimmed) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::islower(c)) return false;
    if (std::isupper(c)) has_upper = true;
  }
  return has_upper;
}

// "12." or "12)" enumeration marker; hands back the content after it.
static bool split_enum_marker(const std::string& trimmed, std::string* content) {
  size_t pos = 0;
  while (pos < trimmed.size() && std::isdigit(static_cast<unsigned char>(trimmed[pos]))) ++pos;
  if (pos == 0 || pos >= trimmed.size()) return false;
  if (trimmed[pos] != '.' && trimmed[pos] != ')') return false;
  *content = trim(trimmed.substr(pos + 1));
  return true;
}

std::vector<std::string> extract_descriptions(const std::string& note_text) {
  std::vector<std::string> items;
  bool in_section = false;
  bool item_open = false;

  auto start_item = [&](const std::string& content) {
    items.push_back(content);
    item_open = true;
  };
  auto continue_item = [&](const std::string& content) {
    if (!item_open) {
      start_item(content);
    } else {
      items.back() += ' ';
      items.back() += content;
    }
  };
  auto feed_line = [&](const std::string& trimmed) {
    std::string content;
    if (split_enum_marker(trimmed, &content)) {
      if (!content.empty()) {
        start_item(content);
      } else {
        item_open = false;  // bare marker; wait for the item text
      }
    } else {
      continue_item(trimmed);
    }
  };

  std::istringstream lines(note_text);
  std::string line;
  while (std::getline(lines, line)) {
    std::string trimmed = trim(line);
    std::string rest;
    if (is_diagnosis_header(trimmed, &rest)) {
      in_section = true;
      item_open = false;
      if (!rest.empty()) feed_line(rest);
      continue;
    }
    if (!in_section) continue;
    if (is_section_header(trimmed)) {
      in_section = false;
      item_open = false;
      continue;
    }
    if (trimmed.empty()) continue;
    feed_line(trimmed);
  }

  items.erase(std::remove_if(items.begin(), items.end(),
                             [](const std::string& s) { return s.empty(); }),
              items.end());
  return items;
}

// ---- tokenization ----------------------------------------------------------------

static bool is_separable_punct(char c) {
  switch (c) {
    case ',': case '.': case ';': case ':': case '?': case '!':
    case '(': case ')': case '/':
      return true;
    default:
      return false;
  }
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream chunks(text);
  std::string chunk;
  while (chunks >> chunk) {
    size_t begin = 0, end = chunk.size();
    while (begin < end && is_separable_punct(chunk[begin])) {
      tokens.push_back(std::string(1, chunk[begin]));
      ++begin;
    }
    std::vector<std::string> tail;
    while (end > begin && is_separable_punct(chunk[end - 1])) {
      tail.push_back(std::string(1, chunk[end - 1]));
      --end;
    }
    if (end > begin) tokens.push_back(chunk.substr(begin, end - begin));
    tokens.insert(tokens.end(), tail.rbegin(), tail.rend());
  }
  return tokens;
}

// ---- code selection -----------------------------------------------------------------

std::vector<CodeDefinition> select_top_codes(const std::vector<AdmissionRecord>& records,
                                             const std::vector<CodeDefinition>& table, int k) {
  if (k < 1) throw UsageError("select_top_codes: k must be >= 1");
  if (static_cast<int>(table.size()) < k) {
    throw DataError("select_top_codes: table has " + std::to_string(table.size()) +
                    " codes, need " + std::to_string(k));
  }
  std::unordered_map<std::string, long long> visits;
  for (const auto& rec : records) {
    for (const auto& code : rec.codes) visits[code] += 1;
  }
  std::vector<const CodeDefinition*> order;
  order.reserve(table.size());
  for (const auto& def : table) order.push_back(&def);
  std::sort(order.begin(), order.end(), [&](const CodeDefinition* a, const CodeDefinition* b) {
    long long ca = 0, cb = 0;
    if (auto it = visits.find(a->code); it != visits.end()) ca = it->second;
    if (auto it = visits.find(b->code); it != visits.end()) cb = it->second;
    if (ca != cb) return ca > cb;
    return a->code < b->code;
  });
  std::vector<CodeDefinition> selected;
  selected.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) selected.push_back(*order[static_cast<size_t>(i)]);
  return selected;
}

void restrict_codes(std::vector<AdmissionRecord>& records,
                    const std::vector<CodeDefinition>& selected, bool drop_unlabeled) {
  std::unordered_set<std::string> keep;
  for (const auto& def : selected) keep.insert(def.code);
  for (auto& rec : records) {
    std::vector<std::string> filtered;
    for (const auto& code : rec.codes) {
      if (keep.count(code)) filtered.push_back(code);
    }
    rec.codes = std::move(filtered);
  }
  if (drop_unlabeled) {
    records.erase(std::remove_if(records.begin(), records.end(),
                                 [](const AdmissionRecord& r) { return r.codes.empty(); }),
                  records.end());
  }
}

// ---- splits -----------------------------------------------------------------------

DatasetSplit split_dataset(std::vector<AdmissionRecord> records, double train_frac,
                           double val_frac, double test_frac, Rng& rng) {
  if (records.empty()) throw DataError("split_dataset: empty record list");
  double sum = train_frac + val_frac + test_frac;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw UsageError("split_dataset: fractions must sum to 1");
  }
  rng.shuffle(records);
  const size_t n = records.size();
  const size_t n_val = static_cast<size_t>(static_cast<double>(n) * val_frac);
  const size_t n_test = static_cast<size_t>(static_cast<double>(n) * test_frac);
  const size_t n_train = n - n_val - n_test;  // remainder goes to train
  DatasetSplit split;
  split.train.assign(records.begin(), records.begin() + static_cast<long>(n_train));
  split.validation.assign(records.begin() + static_cast<long>(n_train),
                          records.begin() + static_cast<long>(n_train + n_val));
  split.test.assign(records.begin() + static_cast<long>(n_train + n_val), records.end());
  return split;
}

// ---- vocabularies --------------------------------------------------------------------

CharVocab::CharVocab() {
  index_.fill(-1);
  symbols_.push_back(0);  // UNK slot
}

int CharVocab::add(unsigned char c) {
  int& slot = index_[c];
  if (slot < 0) {
    slot = static_cast<int>(symbols_.size());
    symbols_.push_back(c);
  }
  return slot;
}

int CharVocab::lookup(unsigned char c) const {
  int slot = index_[c];
  return slot < 0 ? kUnkIndex : slot;
}

WordVocab::WordVocab() { symbols_.push_back("<unk>"); }

int WordVocab::add(const std::string& w) {
  auto [it, inserted] = index_.try_emplace(w, static_cast<int>(symbols_.size()));
  if (inserted) symbols_.push_back(w);
  return it->second;
}

int WordVocab::lookup(const std::string& w) const {
  auto it = index_.find(w);
  return it == index_.end() ? kUnkIndex : it->second;
}

template <class AddToken>
static void traverse_corpus_tokens(const std::vector<AdmissionRecord>& train_records,
                                   const std::vector<CodeDefinition>& codes, AddToken&& add) {
  for (const auto& rec : train_records) {
    for (const auto& desc : rec.descriptions) {
      for (const auto& tok : tokenize(desc)) add(tok);
    }
  }
  for (const auto& def : codes) {
    for (const auto& tok : tokenize(def.long_title)) add(tok);
  }
}

CharVocab build_char_vocab(const std::vector<AdmissionRecord>& train_records,
                           const std::vector<CodeDefinition>& codes) {
  CharVocab vocab;
  traverse_corpus_tokens(train_records, codes, [&](const std::string& tok) {
    for (char c : tok) vocab.add(static_cast<unsigned char>(c));
  });
  return vocab;
}

WordVocab build_word_vocab(const std::vector<AdmissionRecord>& train_records,
                           const std::vector<CodeDefinition>& codes) {
  WordVocab vocab;
  traverse_corpus_tokens(train_records, codes,
                         [&](const std::string& tok) { vocab.add(tok); });
  return vocab;
}

// ---- synthetic corpus -------------------------------------------------------------------

namespace {

const char* const kQualifiers[] = {
    "acute", "chronic", "severe", "mild", "secondary", "primary", "congenital", "recurrent",
    "transient", "malignant", "benign", "progressive", "diffuse", "focal", "essential",
    "unspecified"};

const char* const kSites[] = {
    "renal", "cardiac", "hepatic", "pulmonary", "cerebral", "vascular", "gastric", "intestinal",
    "urinary", "respiratory", "coronary", "arterial", "venous", "spinal", "neonatal", "biliary"};

const char* const kConditions[] = {
    "infection", "failure", "disease", "syndrome", "distress", "insufficiency", "obstruction",
    "inflammation", "hemorrhage", "stenosis", "embolism", "fibrosis", "sepsis", "anemia",
    "edema", "hypertension", "hypotension", "pneumonia", "ischemia", "necrosis", "thrombosis",
    "neuropathy", "dysfunction", "atrophy"};

const std::pair<const char*, const char*> kSynonyms[] = {
    {"acute", "sudden"},       {"chronic", "longstanding"}, {"severe", "serious"},
    {"mild", "slight"},        {"renal", "kidney"},         {"cardiac", "heart"},
    {"hepatic", "liver"},      {"pulmonary", "lung"},       {"hemorrhage", "bleeding"},
    {"stenosis", "narrowing"}, {"failure", "decompensation"}, {"disease", "disorder"},
    {"obstruction", "blockage"}, {"edema", "swelling"}};

const std::pair<const char*, const char*> kAbbreviations[] = {
    {"hypertension", "HTN"}, {"pneumonia", "PNA"},    {"respiratory", "resp"},
    {"insufficiency", "insuff"}, {"infection", "inf"}, {"thrombosis", "DVT"}};

template <size_t N>
const char* pick(const char* const (&bank)[N], Rng& rng) {
  return bank[rng.uniform_int(N)];
}

std::string apply_word_noise(const std::string& word, const NoiseParams& noise, Rng& rng) {
  std::string out = word;
  if (noise.synonym_rate > 0.0 && rng.bernoulli(noise.synonym_rate)) {
    for (const auto& [from, to] : kSynonyms) {
      if (out == from) {
        out = to;
        break;
      }
    }
  }
  if (noise.abbrev_rate > 0.0 && rng.bernoulli(noise.abbrev_rate)) {
    for (const auto& [from, to] : kAbbreviations) {
      if (out == from) {
        out = to;
        break;
      }
    }
  }
  if (noise.case_flip_rate > 0.0 && rng.bernoulli(noise.case_flip_rate) && !out.empty()) {
    unsigned char c = static_cast<unsigned char>(out[0]);
    out[0] = std::islower(c) ? static_cast<char>(std::toupper(c))
                             : static_cast<char>(std::tolower(c));
  }
  return out;
}

std::string apply_typos(const std::string& text, double rate, Rng& rng) {
  if (rate <= 0.0) return text;
  std::string out;
  out.reserve(text.size() + 4);
  for (char ch : text) {
    bool is_letter = std::isalpha(static_cast<unsigned char>(ch)) != 0;
    if (is_letter && rng.bernoulli(rate)) {
      switch (rng.uniform_int(3)) {
        case 0:  // substitute
          out.push_back(static_cast<char>('a' + rng.uniform_int(26)));
          break;
        case 1:  // delete
          break;
        default:  // insert before
          out.push_back(static_cast<char>('a' + rng.uniform_int(26)));
          out.push_back(ch);
          break;
      }
    } else {
      out.push_back(ch);
    }
  }
  return out;
}

std::string noisy_description(const std::string& title, const NoiseParams& noise, Rng& rng) {
  std::string joined;
  {
    std::istringstream words(title);
    std::string w;
    bool first = true;
    while (words >> w) {
      if (!first) joined += ' ';
      joined += apply_word_noise(w, noise, rng);
      first = false;
    }
  }
  std::string out = apply_typos(joined, noise.typo_rate, rng);
  if (trim(out).empty()) return title;
  return out;
}

// Skewed code sampling so the frequency histogram has a head and a tail.
size_t zipf_sample(const std::vector<double>& cumulative, Rng& rng) {
  double u = rng.uniform01() * cumulative.back();
  return static_cast<size_t>(
      std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(int n_codes, int n_records, const NoiseParams& noise,
                                          Rng& rng) {
  if (n_codes < 2) throw UsageError("generate_synthetic_corpus: need at least 2 codes");
  if (n_records < n_codes) {
    throw UsageError("generate_synthetic_corpus: need at least as many records as codes");
  }
  for (double r : {noise.typo_rate, noise.synonym_rate, noise.case_flip_rate, noise.abbrev_rate,
                   noise.combo_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw UsageError("generate_synthetic_corpus: noise rates must be in [0,1]");
    }
  }

  SyntheticCorpus corpus;
  std::set<std::string> seen_titles;
  for (int i = 0; i < n_codes; ++i) {
    std::string title;
    do {
      title.clear();
      if (rng.bernoulli(0.3)) {
        title += pick(kQualifiers, rng);
        title += ' ';
      }
      title += pick(kQualifiers, rng);
      title += ' ';
      title += pick(kSites, rng);
      title += ' ';
      title += pick(kConditions, rng);
    } while (!seen_titles.insert(title).second);
    corpus.codes.push_back({std::to_string(1000 + 7 * i), title});
  }

  std::vector<double> cumulative(static_cast<size_t>(n_codes));
  double acc = 0.0;
  for (int i = 0; i < n_codes; ++i) {
    acc += 1.0 / (1.0 + i);
    cumulative[static_cast<size_t>(i)] = acc;
  }

  const auto title_of = [&](size_t idx) { return corpus.codes[idx].long_title; };

  for (int r = 0; r < n_records; ++r) {
    std::set<size_t> gold;
    // The first n_codes records pin one code each so every code is seen.
    gold.insert(r < n_codes ? static_cast<size_t>(r) : zipf_sample(cumulative, rng));
    if (rng.bernoulli(0.35)) gold.insert(zipf_sample(cumulative, rng));
    if (rng.bernoulli(0.15)) gold.insert(zipf_sample(cumulative, rng));

    std::vector<size_t> gold_order(gold.begin(), gold.end());
    std::vector<std::string> descriptions;
    for (size_t idx : gold_order) {
      descriptions.push_back(noisy_description(title_of(idx), noise, rng));
    }

    if (noise.combo_rate > 0.0 && rng.bernoulli(noise.combo_rate)) {
      if (gold_order.size() >= 2 && rng.bernoulli(0.5)) {
        // one description evidencing two codes
        std::string merged = noisy_description(title_of(gold_order[0]), noise, rng) + " with " +
                             noisy_description(title_of(gold_order[1]), noise, rng);
        descriptions.erase(descriptions.begin(), descriptions.begin() + 2);
        descriptions.insert(descriptions.begin(), merged);
      } else if (descriptions.size() < 6) {
        // two descriptions evidencing one code
        descriptions.push_back(noisy_description(title_of(gold_order[0]), noise, rng));
      }
    }

    AdmissionRecord rec;
    rec.hadm_id = "H" + std::to_string(100000 + r);
    rec.descriptions = std::move(descriptions);
    for (size_t idx : gold_order) rec.codes.push_back(corpus.codes[idx].code);
    std::sort(rec.codes.begin(), rec.codes.end());
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

// ---- statistics ------------------------------------------------------------------------

CorpusStats corpus_stats(const std::vector<AdmissionRecord>& records) {
  if (records.empty()) throw DataError("corpus_stats: empty record list");
  CorpusStats stats;
  std::map<std::string, int> code_counts;
  for (const auto& rec : records) {
    stats.n_records += 1;
    stats.n_descriptions += static_cast<int>(rec.descriptions.size());
    stats.descriptions_per_record[static_cast<int>(rec.descriptions.size())] += 1;
    stats.codes_per_record[static_cast<int>(rec.codes.size())] += 1;
    for (const auto& code : rec.codes) code_counts[code] += 1;
  }
  stats.code_frequency.assign(code_counts.begin(), code_counts.end());
  std::sort(stats.code_frequency.begin(), stats.code_frequency.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return a.first < b.first;
            });
  return stats;
}

std::string corpus_stats_csv(const CorpusStats& stats) {
  std::ostringstream out;
  out << "section,key,count\n";
  for (const auto& [k, v] : stats.descriptions_per_record) {
    out << "descriptions_per_record," << k << ',' << v << '\n';
  }
  for (const auto& [code, count] : stats.code_frequency) {
    out << "code_frequency," << code << ',' << count << '\n';
  }
  for (const auto& [k, v] : stats.codes_per_record) {
    out << "codes_per_record," << k << ',' << v << '\n';
  }
  return out.str();
}

// ---- file formats -------------------------------------------------------------------------

static std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<AdmissionRecord> load_admissions_jsonl(const std::string& path, bool strict,
                                                   LoadStats* stats, std::ostream* warn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<AdmissionRecord> records;
  LoadStats local;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fail = [&](const std::string& why) {
      std::string msg = path + ": line " + std::to_string(line_no) + ": " + why;
      if (strict) throw DataError(msg);
      if (warn) *warn << "warning: skipping " << msg << '\n';
      local.skipped += 1;
    };
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      fail("not a JSON object");
      continue;
    }
    if (!obj.contains("hadm_id") || !obj["hadm_id"].is_string()) {
      fail("missing string field \"hadm_id\"");
      continue;
    }
    AdmissionRecord rec;
    rec.hadm_id = obj["hadm_id"].get<std::string>();
    if (obj.contains("codes")) {
      if (!obj["codes"].is_array()) {
        fail("\"codes\" is not an array");
        continue;
      }
      std::vector<std::string> codes;
      for (const auto& c : obj["codes"]) {
        if (!c.is_string()) {
          codes.clear();
          break;
        }
        codes.push_back(c.get<std::string>());
      }
      rec.codes = sorted_unique(std::move(codes));
    }
    if (obj.contains("descriptions")) {
      if (!obj["descriptions"].is_array()) {
        fail("\"descriptions\" is not an array");
        continue;
      }
      for (const auto& d : obj["descriptions"]) {
        if (d.is_string()) {
          std::string t = trim(d.get<std::string>());
          if (!t.empty()) rec.descriptions.push_back(t);
        }
      }
    } else if (obj.contains("text") && obj["text"].is_string()) {
      rec.descriptions = extract_descriptions(obj["text"].get<std::string>());
    } else {
      fail("neither \"descriptions\" nor \"text\" present");
      continue;
    }
    if (rec.descriptions.empty()) {
      local.discarded += 1;
      continue;
    }
    local.kept += 1;
    records.push_back(std::move(rec));
  }
  if (stats) *stats = local;
  return records;
}

void write_records_jsonl(const std::string& path, const std::vector<AdmissionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& rec : records) {
    json obj;
    obj["hadm_id"] = rec.hadm_id;
    obj["descriptions"] = rec.descriptions;
    obj["codes"] = rec.codes;
    out << obj.dump() << '\n';
  }
}

std::vector<CodeDefinition> read_code_table_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<CodeDefinition> codes;
  std::unordered_set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": expected code<TAB>title");
    }
    CodeDefinition def{line.substr(0, tab), trim(line.substr(tab + 1))};
    if (def.code.empty() || def.long_title.empty()) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": empty code or title");
    }
    if (!seen.insert(def.code).second) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": duplicate code " + def.code);
    }
    codes.push_back(std::move(def));
  }
  if (codes.empty()) throw DataError(path + ": no code definitions");
  return codes;
}

void write_code_table_tsv(const std::string& path, const std::vector<CodeDefinition>& codes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& def : codes) out << def.code << '\t' << def.long_title << '\n';
}

void write_splits_json(const std::string& path, const DatasetSplit& split) {
  auto ids = [](const std::vector<AdmissionRecord>& records) {
    std::vector<std::string> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.hadm_id);
    return out;
  };
  json obj;
  obj["train"] = ids(split.train);
  obj["validation"] = ids(split.validation);
  obj["test"] = ids(split.test);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << obj.dump(2) << '\n';
}

DatasetSplit apply_splits_json(const std::string& path,
                               const std::vector<AdmissionRecord>& records) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) throw DataError(path + ": not a JSON object");
  std::unordered_map<std::string, const AdmissionRecord*> by_id;
  for (const auto& rec : records) by_id[rec.hadm_id] = &rec;
  auto gather = [&](const char* key) {
    if (!obj.contains(key) || !obj[key].is_array()) {
      throw DataError(path + ": missing array \"" + key + "\"");
    }
    std::vector<AdmissionRecord> out;
    for (const auto& id : obj[key]) {
      auto it = by_id.find(id.get<std::string>());
      if (it == by_id.end()) {
        throw DataError(path + ": unknown hadm_id " + id.get<std::string>() + " in " + key);
      }
      out.push_back(*it->second);
    }
    return out;
  };
  DatasetSplit split;
  split.train = gather("train");
  split.validation = gather("validation");
  split.test = gather("test");
  return split;
}

}  // namespace icdattn
