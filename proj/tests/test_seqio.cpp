#include <zlib.h>

#include <string>
#include <vector>

#include "doctest.h"
#include "genolm/common.hpp"
#include "genolm/seqio.hpp"
#include "test_util.hpp"

using namespace genolm;

namespace {

void write_gz(const std::string& path, const std::string& contents) {
    gzFile f = gzopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    REQUIRE(gzwrite(f, contents.data(), static_cast<unsigned>(contents.size())) ==
            static_cast<int>(contents.size()));
    gzclose(f);
}

}  // namespace

TEST_CASE("parse_fasta reads records, ids, and label= keys") {
    testutil::TempDir tmp("fasta");
    const std::string path = tmp.file("in.fasta");
    write_file(path,
               ">seq1 some description label=pathogenic\n"
               "ACGT\nACGT\n"
               ">seq2\n"
               "GGGG\n");
    const std::vector<SequenceRecord> recs = parse_fasta(path);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].id == "seq1");
    CHECK(recs[0].sequence == "ACGTACGT");  // multi-line bodies concatenate
    CHECK(recs[0].label == "pathogenic");
    CHECK(recs[0].record_index == 0);
    CHECK(recs[1].id == "seq2");
    CHECK(recs[1].sequence == "GGGG");
    CHECK(recs[1].label.empty());
    CHECK(recs[1].record_index == 1);
}

TEST_CASE("parse_fasta canonicalizes case and IUPAC ambiguity codes") {
    testutil::TempDir tmp("canon");
    const std::string path = tmp.file("in.fasta");
    write_file(path, ">s\nacgtRYSWKMBDHVn\n");
    const std::vector<SequenceRecord> recs = parse_fasta(path);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].sequence == "ACGTNNNNNNNNNNN");
}

TEST_CASE("canonicalize_sequence rejects junk and names the line") {
    CHECK(canonicalize_sequence("acgt") == "ACGT");
    CHECK(canonicalize_sequence("AC GT") == "ACGT");  // whitespace is skipped
    CHECK_THROWS_AS(canonicalize_sequence("ACGU"), ParseError);  // not an ambiguity code
    CHECK_THROWS_AS(canonicalize_sequence("AC-GT", 17), ParseError);
    try {
        canonicalize_sequence("AC-GT", 17);
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 17") != std::string::npos);
    }
}

TEST_CASE("parse_fasta rejects duplicate ids within a file") {
    testutil::TempDir tmp("dup");
    const std::string path = tmp.file("in.fasta");
    write_file(path, ">a\nACGT\n>a\nGGGG\n");
    CHECK_THROWS_AS(parse_fasta(path), ParseError);
}

TEST_CASE("parse_fasta rejects a body with no header") {
    testutil::TempDir tmp("nohdr");
    const std::string path = tmp.file("in.fasta");
    write_file(path, "ACGT\n");
    CHECK_THROWS_AS(parse_fasta(path), ParseError);
}

TEST_CASE("gzip-compressed FASTA parses identically to plain text") {
    testutil::TempDir tmp("gz");
    const std::string text = ">g1 label=x\nACGTACGTAC\n>g2\nTTTT\n";
    write_file(tmp.file("plain.fasta"), text);
    write_gz(tmp.file("zipped.fasta.gz"), text);
    const auto plain = parse_fasta(tmp.file("plain.fasta"));
    const auto zipped = parse_fasta(tmp.file("zipped.fasta.gz"));
    REQUIRE(plain.size() == zipped.size());
    for (std::size_t i = 0; i < plain.size(); ++i) {
        CHECK(plain[i].id == zipped[i].id);
        CHECK(plain[i].sequence == zipped[i].sequence);
        CHECK(plain[i].label == zipped[i].label);
    }
}

TEST_CASE("FastaReader streams records one at a time") {
    testutil::TempDir tmp("stream");
    const std::string path = tmp.file("in.fasta");
    write_file(path, ">a\nAC\n>b\nGT\n");
    FastaReader reader(path);
    auto r1 = reader.next();
    REQUIRE(r1.has_value());
    CHECK(r1->id == "a");
    auto r2 = reader.next();
    REQUIRE(r2.has_value());
    CHECK(r2->id == "b");
    CHECK_FALSE(reader.next().has_value());
}

TEST_CASE("label manifest round-trips and validates column counts") {
    testutil::TempDir tmp("labels");
    const std::string path = tmp.file("labels.tsv");
    write_file(path, "id\tlabel\ns1\tpathogenic\ns2\tnonpathogenic\n");
    const LabelManifest m = read_label_manifest(path);
    REQUIRE(m.rows.size() == 2);
    std::string label;
    CHECK(m.label_for("s1", &label));
    CHECK(label == "pathogenic");
    CHECK_FALSE(m.label_for("zzz", &label));

    write_file(path, "id\tlabel\nonly_one_column\n");
    CHECK_THROWS_AS(read_label_manifest(path), ParseError);
}

TEST_CASE("attach_labels keeps manifest-covered records and counts drops") {
    std::vector<SequenceRecord> recs(3);
    recs[0].id = "a";
    recs[0].sequence = "ACGT";
    recs[1].id = "b";
    recs[1].sequence = "GGTT";
    recs[2].id = "c";
    recs[2].sequence = "TTAA";
    LabelManifest m;
    m.rows = {{"a", "pathogenic"}, {"c", "nonpathogenic"}};
    const AttachResult res = attach_labels(recs, m);
    CHECK(res.dropped_records == 1);
    REQUIRE(res.dataset.records.size() == 2);
    CHECK(res.dataset.records[0].id == "a");
    CHECK(res.dataset.records[1].id == "c");
    CHECK(res.dataset.task == Task::kBinary);
    CHECK(res.dataset.label_set == std::vector<std::string>{"nonpathogenic", "pathogenic"});
    CHECK(res.dataset.label_index("pathogenic") == 1);
    CHECK(res.dataset.label_index("nonpathogenic") == 0);
    CHECK(res.dataset.label_index("other") == -1);
}

TEST_CASE("attach_labels rejects more than 7 classes") {
    std::vector<SequenceRecord> recs(8);
    LabelManifest m;
    for (int i = 0; i < 8; ++i) {
        recs[static_cast<std::size_t>(i)].id = "r" + std::to_string(i);
        recs[static_cast<std::size_t>(i)].sequence = "ACGT";
        m.rows.push_back({"r" + std::to_string(i), "label" + std::to_string(i)});
    }
    CHECK_THROWS_AS(attach_labels(recs, m), DataConstraintError);
}

TEST_CASE("task inference follows the label alphabet") {
    CHECK(infer_task({}) == Task::kUnlabeled);
    CHECK(infer_task({"nonpathogenic", "pathogenic"}) == Task::kBinary);
    CHECK(infer_task({"pathogenic"}) == Task::kBinary);
    CHECK(infer_task({"ecoli", "salmonella"}) == Task::kSpecies7);
    CHECK(infer_task({"a", "b", "c", "d", "e", "f", "g"}) == Task::kSpecies7);
    CHECK_THROWS_AS(infer_task({"a", "b", "c", "d", "e", "f", "g", "h"}), DataConstraintError);
    CHECK(task_name(Task::kBinary) == task_name(task_from_name(task_name(Task::kBinary))));
}

TEST_CASE("write_fasta wraps at 70 columns and round-trips") {
    testutil::TempDir tmp("wrap");
    Dataset ds = make_dataset([] {
        std::vector<SequenceRecord> recs(1);
        recs[0].id = "long";
        recs[0].sequence = std::string(150, 'A');
        return recs;
    }());
    const std::string path = tmp.file("out.fasta");
    write_fasta(ds, path);
    const std::vector<std::string> lines = split_on(read_file(path), '\n');
    REQUIRE(lines.size() >= 4);
    CHECK(lines[0] == ">long");
    CHECK(lines[1].size() == 70);
    CHECK(lines[2].size() == 70);
    CHECK(lines[3].size() == 10);
    const auto back = parse_fasta(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].sequence == ds.records[0].sequence);
}

TEST_CASE("write_label_manifest round-trips through read_label_manifest") {
    testutil::TempDir tmp("lblrt");
    std::vector<SequenceRecord> recs(2);
    recs[0].id = "x";
    recs[0].sequence = "ACGT";
    recs[0].label = "pathogenic";
    recs[1].id = "y";
    recs[1].sequence = "ACGT";
    recs[1].label = "nonpathogenic";
    const Dataset ds = make_dataset(std::move(recs));
    const std::string path = tmp.file("labels.tsv");
    write_label_manifest(ds, path);
    const LabelManifest m = read_label_manifest(path);
    REQUIRE(m.rows.size() == 2);
    CHECK(m.rows[0] == std::pair<std::string, std::string>{"x", "pathogenic"});
    CHECK(m.rows[1] == std::pair<std::string, std::string>{"y", "nonpathogenic"});
}
