#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "icdattn/numerics.hpp"

namespace icdattn {

struct RawNote {
  std::string hadm_id;
  std::string text;
  std::vector<std::string> codes;  // gold labels when supplied with the note
};

struct AdmissionRecord {
  std::string hadm_id;
  std::vector<std::string> descriptions;  // non-empty, trimmed
  std::vector<std::string> codes;         // sorted unique gold code strings
};

struct CodeDefinition {
  std::string code;
  std::string long_title;
};

// ---- extraction and tokenization -------------------------------------------

// Pulls the enumerated items out of the diagnosis sections of a note.
// Sections start at a line reading "DISCHARGE DIAGNOSIS" or "FINAL DIAGNOSIS"
// (case-insensitive, optional "ES" plural, optional trailing colon) and end at
// the next all-caps line ending in ':' or at end of note. Items split on
// leading "N." / "N)" markers; lines without a marker continue the previous
// item joined by a single space. Returns an empty list when no section is
// found (the caller discards such records).
std::vector<std::string> extract_descriptions(const std::string& note_text);

// Whitespace split, then leading/trailing , . ; : ? ! ( ) / peeled into their
// own tokens. Case is preserved.
std::vector<std::string> tokenize(const std::string& text);

// ---- code selection and splits ----------------------------------------------

// The k codes assigned to the most records, ties broken by code string.
// Output order is by descending count then code. Throws when the table has
// fewer than k codes.
std::vector<CodeDefinition> select_top_codes(const std::vector<AdmissionRecord>& records,
                                             const std::vector<CodeDefinition>& table, int k);

// Intersects every record's gold set with `selected`. Records whose gold set
// becomes empty are kept unless drop_unlabeled is set.
void restrict_codes(std::vector<AdmissionRecord>& records,
                    const std::vector<CodeDefinition>& selected, bool drop_unlabeled);

struct DatasetSplit {
  std::vector<AdmissionRecord> train, validation, test;
};

// Seeded shuffle then contiguous slices. Validation and test sizes are
// floor(n * fraction); the remainder goes to train.
DatasetSplit split_dataset(std::vector<AdmissionRecord> records, double train_frac,
                           double val_frac, double test_frac, Rng& rng);

// ---- vocabularies ------------------------------------------------------------

// Byte-level character vocabulary; index 0 is the UNK slot.
class CharVocab {
 public:
  static constexpr int kUnkIndex = 0;
  CharVocab();
  int add(unsigned char c);          // inserts on first occurrence
  int lookup(unsigned char c) const; // kUnkIndex when unseen
  int size() const { return static_cast<int>(symbols_.size()); }
  unsigned char symbol(int index) const { return symbols_[static_cast<size_t>(index)]; }

 private:
  std::vector<unsigned char> symbols_;
  std::array<int, 256> index_;
};

// Word vocabulary; index 0 is the UNK slot ("<unk>").
class WordVocab {
 public:
  static constexpr int kUnkIndex = 0;
  WordVocab();
  int add(const std::string& w);
  int lookup(const std::string& w) const;
  int size() const { return static_cast<int>(symbols_.size()); }
  const std::string& symbol(int index) const { return symbols_[static_cast<size_t>(index)]; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

// Built from the training split plus every code long title, in a fixed
// traversal order so two builds from the same corpus agree exactly.
CharVocab build_char_vocab(const std::vector<AdmissionRecord>& train_records,
                           const std::vector<CodeDefinition>& codes);
WordVocab build_word_vocab(const std::vector<AdmissionRecord>& train_records,
                           const std::vector<CodeDefinition>& codes);

// ---- synthetic corpus ---------------------------------------------------------

struct NoiseParams {
  double typo_rate = 0.0;       // per-letter insert/delete/substitute
  double synonym_rate = 0.0;    // per-word swap from a fixed synonym map
  double case_flip_rate = 0.0;  // per-word first-letter case toggle
  double abbrev_rate = 0.0;     // per-word abbreviation substitution
  double combo_rate = 0.0;      // per-record chance of a combination pattern
};

struct SyntheticCorpus {
  std::vector<AdmissionRecord> records;
  std::vector<CodeDefinition> codes;
};

// Builds code titles from a fixed word bank, then derives 1..6 descriptions
// per record from the record's gold titles under the configured noise. With
// combo_rate > 0 some records carry two descriptions for one code or one
// description covering two codes. All rates zero reproduces titles verbatim.
SyntheticCorpus generate_synthetic_corpus(int n_codes, int n_records, const NoiseParams& noise,
                                          Rng& rng);

// ---- statistics -----------------------------------------------------------------

struct CorpusStats {
  std::map<int, int> descriptions_per_record;
  std::vector<std::pair<std::string, int>> code_frequency;  // sorted by count desc, code asc
  std::map<int, int> codes_per_record;
  int n_records = 0;
  int n_descriptions = 0;
};

CorpusStats corpus_stats(const std::vector<AdmissionRecord>& records);  // throws on empty input
std::string corpus_stats_csv(const CorpusStats& stats);

// ---- file formats ------------------------------------------------------------------

struct LoadStats {
  int kept = 0;       // records with at least one description
  int discarded = 0;  // parsed records with no extractable description
  int skipped = 0;    // malformed lines skipped (non-strict mode)
};

// Line-delimited JSON, one admission per line. Accepts raw notes
// {"hadm_id","text"[,"codes"]} (descriptions get extracted) and pre-extracted
// {"hadm_id","descriptions","codes"}. In strict mode a malformed line throws
// DataError naming the line; otherwise it is skipped with a warning.
std::vector<AdmissionRecord> load_admissions_jsonl(const std::string& path, bool strict,
                                                   LoadStats* stats, std::ostream* warn);

void write_records_jsonl(const std::string& path, const std::vector<AdmissionRecord>& records);

// Two-column TSV: code <TAB> long_title, no header.
std::vector<CodeDefinition> read_code_table_tsv(const std::string& path);
void write_code_table_tsv(const std::string& path, const std::vector<CodeDefinition>& codes);

// {"train": [hadm_id...], "validation": [...], "test": [...]}
void write_splits_json(const std::string& path, const DatasetSplit& split);
// Reassembles a split from a manifest; records missing from the manifest are
// dropped, manifest ids missing from `records` throw DataError.
DatasetSplit apply_splits_json(const std::string& path,
                               const std::vector<AdmissionRecord>& records);

}  // namespace icdattn
