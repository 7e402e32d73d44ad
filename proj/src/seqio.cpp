#include "genolm/seqio.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "genolm/common.hpp"

namespace genolm {

std::string task_name(Task t) {
    switch (t) {
        case Task::kUnlabeled: return "unlabeled";
        case Task::kBinary: return "binary";
        case Task::kSpecies7: return "species-7";
    }
    return "unlabeled";
}

Task task_from_name(const std::string& name) {
    if (name == "binary") return Task::kBinary;
    if (name == "species-7") return Task::kSpecies7;
    if (name == "unlabeled") return Task::kUnlabeled;
    throw ConfigError("unknown task name: " + name);
}

int Dataset::label_index(const std::string& label) const {
    auto it = std::lower_bound(label_set.begin(), label_set.end(), label);
    if (it == label_set.end() || *it != label) return -1;
    return static_cast<int>(it - label_set.begin());
}

namespace {

// 256-entry canonicalization table: A/C/G/T/N map to themselves (case
// folded), the other IUPAC ambiguity codes map to N, everything else is 0.
constexpr std::array<char, 256> make_canon_table() {
    std::array<char, 256> t{};
    const char* keep = "ACGTN";
    const char* to_n = "RYSWKMBDHV";
    for (const char* p = keep; *p; ++p) {
        t[static_cast<unsigned char>(*p)] = *p;
        t[static_cast<unsigned char>(*p + 32)] = *p;  // lowercase
    }
    for (const char* p = to_n; *p; ++p) {
        t[static_cast<unsigned char>(*p)] = 'N';
        t[static_cast<unsigned char>(*p + 32)] = 'N';
    }
    return t;
}

constexpr std::array<char, 256> kCanon = make_canon_table();

bool is_space_char(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

}  // namespace

std::string canonicalize_sequence(const std::string& raw, std::int64_t line_number) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        if (is_space_char(c)) continue;
        char mapped = kCanon[static_cast<unsigned char>(c)];
        if (mapped == 0) {
            std::string where = line_number > 0 ? " at line " + std::to_string(line_number) : "";
            throw ParseError("invalid sequence character '" + std::string(1, c) + "'" + where);
        }
        out.push_back(mapped);
    }
    return out;
}

struct FastaReader::Impl {
    std::string path;
    gzFile file = nullptr;
    std::int64_t line_number = 0;
    std::int64_t record_index = 0;
    bool pending_header = false;
    std::string pending_header_line;
    std::int64_t pending_header_lineno = 0;
    bool eof = false;
    std::unordered_set<std::string> seen_ids;
    std::string buf;

    bool read_line(std::string& line) {
        line.clear();
        char chunk[4096];
        bool got_any = false;
        while (true) {
            if (gzgets(file, chunk, sizeof(chunk)) == nullptr) {
                int err = 0;
                const char* msg = gzerror(file, &err);
                if (err != Z_OK && err != Z_STREAM_END)
                    throw ParseError(path + ": decompression error: " + (msg ? msg : ""));
                return got_any;
            }
            got_any = true;
            line += chunk;
            if (!line.empty() && line.back() == '\n') {
                line.pop_back();
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return true;
            }
        }
    }
};

FastaReader::FastaReader(const std::string& path) : impl_(std::make_unique<Impl>()) {
    impl_->path = path;
    impl_->file = gzopen(path.c_str(), "rb");
    if (impl_->file == nullptr) throw ConfigError("cannot open FASTA file: " + path);
    // zlib buffers help a lot on large .gz inputs
    gzbuffer(impl_->file, 1 << 20);
}

FastaReader::~FastaReader() {
    if (impl_ && impl_->file) gzclose(impl_->file);
}

FastaReader::FastaReader(FastaReader&&) noexcept = default;
FastaReader& FastaReader::operator=(FastaReader&&) noexcept = default;

std::optional<SequenceRecord> FastaReader::next() {
    Impl& im = *impl_;
    if (im.eof && !im.pending_header) return std::nullopt;

    std::string header_line;
    std::int64_t header_lineno = 0;
    if (im.pending_header) {
        header_line = im.pending_header_line;
        header_lineno = im.pending_header_lineno;
        im.pending_header = false;
    } else {
        std::string line;
        while (true) {
            if (!im.read_line(line)) {
                im.eof = true;
                return std::nullopt;
            }
            ++im.line_number;
            if (line.empty()) continue;
            if (line[0] != '>')
                throw ParseError(im.path + ": sequence data before first header at line " +
                                 std::to_string(im.line_number));
            header_line = line;
            header_lineno = im.line_number;
            break;
        }
    }

    SequenceRecord rec;
    rec.source_path = im.path;
    rec.record_index = im.record_index++;
    {
        std::string header = header_line.substr(1);
        std::size_t sp = header.find_first_of(" \t");
        rec.id = sp == std::string::npos ? header : header.substr(0, sp);
        if (rec.id.empty())
            throw ParseError(im.path + ": empty record id at line " + std::to_string(header_lineno));
        // optional label=<value> fallback in the description
        if (sp != std::string::npos) {
            std::istringstream desc(header.substr(sp + 1));
            std::string word;
            while (desc >> word) {
                if (word.rfind("label=", 0) == 0) rec.label = word.substr(6);
            }
        }
    }
    if (!im.seen_ids.insert(rec.id).second)
        throw ParseError(im.path + ": duplicate record id '" + rec.id + "'");

    std::string line;
    while (true) {
        if (!im.read_line(line)) {
            im.eof = true;
            break;
        }
        ++im.line_number;
        if (!line.empty() && line[0] == '>') {
            im.pending_header = true;
            im.pending_header_line = line;
            im.pending_header_lineno = im.line_number;
            break;
        }
        rec.sequence += canonicalize_sequence(line, im.line_number);
    }
    return rec;
}

std::vector<SequenceRecord> parse_fasta(const std::string& path) {
    FastaReader reader(path);
    std::vector<SequenceRecord> out;
    while (auto rec = reader.next()) out.push_back(std::move(*rec));
    return out;
}

int LabelManifest::label_for(const std::string& id, std::string* out) const {
    for (const auto& [rid, label] : rows) {
        if (rid == id) {
            if (out) *out = label;
            return 1;
        }
    }
    return 0;
}

LabelManifest read_label_manifest(const std::string& path) {
    const std::string contents = read_file(path);
    LabelManifest manifest;
    std::int64_t row_number = 0;
    std::size_t start = 0;
    bool saw_header = false;
    std::unordered_map<std::string, std::string> seen;
    while (start <= contents.size()) {
        std::size_t end = contents.find('\n', start);
        std::string line = end == std::string::npos ? contents.substr(start)
                                                    : contents.substr(start, end - start);
        start = end == std::string::npos ? contents.size() + 1 : end + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row_number;
        auto cols = split_on(line, '\t');
        if (cols.size() != 2)
            throw ParseError(path + ": expected 2 tab-separated columns at row " +
                             std::to_string(row_number) + ", got " + std::to_string(cols.size()));
        if (!saw_header) {
            if (cols[0] != "id" || cols[1] != "label")
                throw ParseError(path + ": missing header row 'id<TAB>label'");
            saw_header = true;
            continue;
        }
        auto [it, inserted] = seen.emplace(cols[0], cols[1]);
        if (!inserted) {
            if (it->second != cols[1])
                throw ParseError(path + ": conflicting labels for id '" + cols[0] + "' at row " +
                                 std::to_string(row_number));
            continue;
        }
        manifest.rows.emplace_back(cols[0], cols[1]);
    }
    return manifest;
}

Task infer_task(const std::vector<std::string>& label_set) {
    if (label_set.empty()) return Task::kUnlabeled;
    bool pathogenicity_labels = true;
    for (const auto& l : label_set)
        if (l != "pathogenic" && l != "nonpathogenic") pathogenicity_labels = false;
    if (pathogenicity_labels) return Task::kBinary;
    if (label_set.size() > 7)
        throw DataConstraintError("label cardinality " + std::to_string(label_set.size()) +
                                  " exceeds the 7-class species task limit");
    return Task::kSpecies7;
}

static Dataset finalize_dataset(std::vector<SequenceRecord> records) {
    Dataset ds;
    std::set<std::string> labels;
    for (const auto& r : records)
        if (!r.label.empty()) labels.insert(r.label);
    ds.label_set.assign(labels.begin(), labels.end());
    ds.task = infer_task(ds.label_set);
    ds.records = std::move(records);
    return ds;
}

AttachResult attach_labels(const std::vector<SequenceRecord>& records, const LabelManifest& manifest) {
    std::unordered_map<std::string, std::string> by_id;
    for (const auto& [id, label] : manifest.rows) by_id.emplace(id, label);

    AttachResult result;
    std::vector<SequenceRecord> kept;
    kept.reserve(records.size());
    for (const auto& rec : records) {
        auto it = by_id.find(rec.id);
        if (it == by_id.end()) {
            ++result.dropped_records;
            continue;
        }
        SequenceRecord r = rec;
        r.label = it->second;
        kept.push_back(std::move(r));
    }
    result.dataset = finalize_dataset(std::move(kept));
    return result;
}

Dataset make_dataset(std::vector<SequenceRecord> records) { return finalize_dataset(std::move(records)); }

void write_fasta(const Dataset& dataset, const std::string& path, int wrap_columns) {
    if (wrap_columns < 1) throw ConfigError("write_fasta: wrap_columns must be >= 1");
    std::string out;
    for (const auto& rec : dataset.records) {
        out += '>';
        out += rec.id;
        out += '\n';
        for (std::size_t off = 0; off < rec.sequence.size(); off += static_cast<std::size_t>(wrap_columns)) {
            out += rec.sequence.substr(off, static_cast<std::size_t>(wrap_columns));
            out += '\n';
        }
        if (rec.sequence.empty()) out += '\n';
    }
    write_file(path, out);
}

void write_label_manifest(const Dataset& dataset, const std::string& path) {
    std::string out = "id\tlabel\n";
    for (const auto& rec : dataset.records) {
        if (rec.label.empty()) continue;
        out += rec.id;
        out += '\t';
        out += rec.label;
        out += '\n';
    }
    write_file(path, out);
}

}  // namespace genolm
