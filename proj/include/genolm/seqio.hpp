#ifndef GENOLM_SEQIO_HPP
#define GENOLM_SEQIO_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace genolm {

/// One named nucleotide sequence. The sequence is canonical: uppercase over
/// {A,C,G,T,N} only.
struct SequenceRecord {
    std::string id;
    std::string sequence;
    std::string label;  // empty = unlabeled
    std::string source_path;
    std::int64_t record_index = 0;

    std::int64_t length_bp() const { return static_cast<std::int64_t>(sequence.size()); }
};

enum class Task { kUnlabeled, kBinary, kSpecies7 };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

struct Dataset {
    std::vector<SequenceRecord> records;
    std::vector<std::string> label_set;  // sorted distinct labels
    Task task = Task::kUnlabeled;

    int label_index(const std::string& label) const;  // -1 when absent
};

/// Streaming FASTA reader. Gzip-compressed input is accepted when the
/// filename ends in .gz. Headers are `>`-prefixed; the id is the first
/// whitespace-delimited header token; an optional `label=<value>` header key
/// is picked up as a fallback label. Sequences are uppercased, IUPAC
/// ambiguity codes beyond A/C/G/T/N are mapped to N, and any other character
/// is a parse error naming the line.
class FastaReader {
public:
    explicit FastaReader(const std::string& path);
    ~FastaReader();
    FastaReader(FastaReader&&) noexcept;
    FastaReader& operator=(FastaReader&&) noexcept;

    /// Next record in file order, or nullopt at end of file. Throws
    /// ParseError on malformed input or duplicate ids.
    std::optional<SequenceRecord> next();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// All records of one file, in file order.
std::vector<SequenceRecord> parse_fasta(const std::string& path);

/// Canonicalizes a raw sequence string the way the parser does. Throws
/// ParseError (with the given line number in the message) on invalid input.
std::string canonicalize_sequence(const std::string& raw, std::int64_t line_number = 0);

struct LabelManifest {
    std::vector<std::pair<std::string, std::string>> rows;  // (id, label) in file order
    int label_for(const std::string& id, std::string* out) const;
};

/// Two-column TSV with header row `id<TAB>label`. Throws ParseError on a row
/// with the wrong column count, naming the row number.
LabelManifest read_label_manifest(const std::string& path);

struct AttachResult {
    Dataset dataset;
    std::int64_t dropped_records = 0;  // records absent from the manifest
};

/// Labels records via the manifest; records absent from the manifest are
/// dropped and counted. Throws DataConstraintError when label cardinality
/// exceeds 7.
AttachResult attach_labels(const std::vector<SequenceRecord>& records, const LabelManifest& manifest);

/// Builds a Dataset from records as-is, using any labels already present
/// (e.g. from `label=` header keys). Label rules as in attach_labels.
Dataset make_dataset(std::vector<SequenceRecord> records);

/// Infers the task from a sorted label set; throws when more than 7 labels.
Task infer_task(const std::vector<std::string>& label_set);

void write_fasta(const Dataset& dataset, const std::string& path, int wrap_columns = 70);
void write_label_manifest(const Dataset& dataset, const std::string& path);

}  // namespace genolm

#endif
