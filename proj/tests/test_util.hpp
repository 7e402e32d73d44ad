#ifndef GENOLM_TESTS_TEST_UTIL_HPP
#define GENOLM_TESTS_TEST_UTIL_HPP

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "genolm/autograd.hpp"
#include "genolm/rng.hpp"
#include "genolm/seqio.hpp"

namespace testutil {

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("genolm_test_" + tag + "_" + std::to_string(++counter) + "_" +
                 std::to_string(static_cast<long>(::getpid())));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path_.string(); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::string random_sequence(genolm::Rng& rng, std::size_t length,
                                   const char* alphabet = "ACGT", std::size_t alphabet_size = 4) {
    std::string s(length, 'A');
    for (char& c : s) c = alphabet[rng.uniform_below(alphabet_size)];
    return s;
}

/// Copy with each position substituted (by one of the other three bases)
/// with probability `rate`.
inline std::string mutate_sequence(genolm::Rng& rng, std::string s, double rate) {
    static constexpr char kBases[4] = {'A', 'C', 'G', 'T'};
    for (char& c : s)
        if (rng.uniform() < rate) {
            const int code = c == 'A' ? 0 : c == 'C' ? 1 : c == 'G' ? 2 : 3;
            c = kBases[(code + 1 + static_cast<int>(rng.uniform_below(3))) % 4];
        }
    return s;
}

/// Two-level corpus for clustering and threshold-sweep tests: each class has
/// `superfamilies` founder sequences (strong mutations of the class
/// template), and each founder spawns `family_size` lightly mutated members.
/// Members of one family are highly similar (within-family 8-mer identity
/// well above 0.8); distinct superfamilies of a class sit at intermediate
/// identity, and different classes are unrelated.
struct FamilyCorpusOptions {
    int num_classes = 2;
    int superfamilies_per_class = 5;
    int family_size = 4;
    std::size_t length_bp = 400;
    double founder_divergence = 0.025;  // template -> founder substitution rate
    double member_divergence = 0.005;   // founder -> member substitution rate
    std::uint64_t seed = 1234;
};

inline genolm::Dataset make_family_corpus(const FamilyCorpusOptions& opt) {
    genolm::Rng rng(opt.seed);
    std::vector<genolm::SequenceRecord> records;
    const std::vector<std::string> labels =
        opt.num_classes == 2 ? std::vector<std::string>{"nonpathogenic", "pathogenic"}
                             : [&] {
                                   std::vector<std::string> l;
                                   for (int c = 0; c < opt.num_classes; ++c)
                                       l.push_back("class_" + std::to_string(c));
                                   return l;
                               }();
    for (int c = 0; c < opt.num_classes; ++c) {
        const std::string tmpl = random_sequence(rng, opt.length_bp);
        for (int s = 0; s < opt.superfamilies_per_class; ++s) {
            // spread founder divergences a little so sweeps over the identity
            // threshold change the clustering
            const double fd = opt.founder_divergence * (1.0 + 0.25 * s);
            const std::string founder = mutate_sequence(rng, tmpl, fd);
            for (int m = 0; m < opt.family_size; ++m) {
                genolm::SequenceRecord rec;
                rec.id = "c" + std::to_string(c) + "_s" + std::to_string(s) + "_m" +
                         std::to_string(m);
                rec.sequence = m == 0 ? founder : mutate_sequence(rng, founder, opt.member_divergence);
                rec.label = labels[static_cast<std::size_t>(c)];
                rec.record_index = static_cast<std::int64_t>(records.size());
                records.push_back(std::move(rec));
            }
        }
    }
    return genolm::make_dataset(std::move(records));
}

/// Central-difference gradient check. `loss_fn(run_backward)` must rebuild
/// the computation from scratch on every call (parameters are perturbed in
/// place between calls), return the scalar loss, and run backward() when
/// asked. Returns the worst relative error over every entry of every
/// parameter: |analytic - numeric| / max(1, |analytic|, |numeric|).
template <typename LossFn>
double max_gradcheck_error(std::vector<genolm::Parameter*> params, LossFn&& loss_fn,
                           double h = 1e-5) {
    for (genolm::Parameter* p : params) p->zero_grad();
    loss_fn(/*run_backward=*/true);
    std::vector<genolm::Matrix> analytic;
    for (genolm::Parameter* p : params) analytic.push_back(p->grad);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        genolm::Matrix& value = params[pi]->value;
        for (std::size_t i = 0; i < value.data.size(); ++i) {
            const double saved = value.data[i];
            value.data[i] = saved + h;
            const double up = loss_fn(false);
            value.data[i] = saved - h;
            const double down = loss_fn(false);
            value.data[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[pi].data[i];
            const double err = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace testutil

#endif
