#include <catch2/catch_amalgamated.hpp>

#include "flowactor/aho_corasick.hpp"
#include "flowactor/rng.hpp"

using namespace flowactor;

namespace {

Bytes bytes_of(const char* s) { return Bytes(s, s + std::string_view(s).size()); }

// Independent oracle: per-pattern occurrence counts by brute-force substring
// comparison at every offset, overlaps included.
std::vector<std::uint64_t> naive_counts(const std::vector<Bytes>& patterns, const Bytes& stream) {
    std::vector<std::uint64_t> counts(patterns.size(), 0);
    for (std::size_t pi = 0; pi < patterns.size(); ++pi) {
        const Bytes& p = patterns[pi];
        if (p.size() > stream.size()) continue;
        for (std::size_t i = 0; i + p.size() <= stream.size(); ++i)
            if (std::equal(p.begin(), p.end(), stream.begin() + i)) counts[pi] += 1;
    }
    return counts;
}

// Feeds the stream through the automaton in the given chunking, accumulating
// per-pattern match counts exactly as the IPS would across packet boundaries.
std::vector<std::uint64_t> automaton_counts(const AcAutomaton& a, std::size_t pattern_count,
                                            const std::vector<Bytes>& chunks) {
    std::vector<std::uint64_t> counts(pattern_count, 0);
    std::uint32_t node = AcAutomaton::kRoot;
    for (const Bytes& chunk : chunks)
        for (std::uint8_t b : chunk) {
            node = a.step(node, b);
            for (std::uint32_t pi : a.matches(node)) counts.at(pi) += 1;
        }
    return counts;
}

}  // namespace

TEST_CASE("classic pattern set matches she, he, hers in ushers") {
    std::vector<Bytes> patterns{bytes_of("he"), bytes_of("she"), bytes_of("his"),
                                bytes_of("hers")};
    auto a = AcAutomaton::build(patterns);
    auto counts = automaton_counts(a, patterns.size(), {bytes_of("ushers")});
    CHECK(counts == std::vector<std::uint64_t>{1, 1, 0, 1});
    CHECK(counts == naive_counts(patterns, bytes_of("ushers")));
}

TEST_CASE("overlapping occurrences all count") {
    std::vector<Bytes> patterns{bytes_of("aa")};
    auto a = AcAutomaton::build(patterns);
    CHECK(automaton_counts(a, 1, {bytes_of("aaa")}) == std::vector<std::uint64_t>{2});
    CHECK(naive_counts(patterns, bytes_of("aaa")) == std::vector<std::uint64_t>{2});
}

TEST_CASE("degenerate pattern sets are build errors") {
    CHECK_THROWS_AS(AcAutomaton::build({}), BuildError);
    CHECK_THROWS_AS(AcAutomaton::build({bytes_of("ok"), Bytes{}}), BuildError);
}

TEST_CASE("root self-loops on bytes that start no pattern") {
    auto a = AcAutomaton::build({bytes_of("she")});
    CHECK(a.step(AcAutomaton::kRoot, 'x') == AcAutomaton::kRoot);
    CHECK(a.step(AcAutomaton::kRoot, 's') != AcAutomaton::kRoot);
}

TEST_CASE("suffix matches surface through failure links") {
    // After consuming "sh", an 'e' completes both "she" and its suffix "he".
    std::vector<Bytes> patterns{bytes_of("he"), bytes_of("she")};
    auto a = AcAutomaton::build(patterns);
    std::uint32_t node = AcAutomaton::kRoot;
    node = a.step(node, 's');
    node = a.step(node, 'h');
    node = a.step(node, 'e');
    CHECK(a.matches(node) == std::vector<std::uint32_t>{1, 0});
}

TEST_CASE("chunk boundaries do not change matches") {
    std::vector<Bytes> patterns{bytes_of("he"), bytes_of("she"), bytes_of("his"),
                                bytes_of("hers")};
    auto a = AcAutomaton::build(patterns);
    auto whole = automaton_counts(a, patterns.size(), {bytes_of("ushers")});
    auto split = automaton_counts(a, patterns.size(), {bytes_of("us"), bytes_of("hers")});
    CHECK(whole == split);
}

TEST_CASE("seeded fuzz agrees with the naive oracle across random chunkings") {
    Rng rng(424242);
    for (int iter = 0; iter < 3000; ++iter) {
        // Small alphabet so matches actually occur.
        auto random_word = [&](std::size_t max_len) {
            Bytes w(rng.range(1, max_len));
            for (auto& b : w) b = static_cast<std::uint8_t>('a' + rng.below(3));
            return w;
        };
        std::vector<Bytes> patterns;
        std::size_t n = rng.range(1, 16);
        for (std::size_t i = 0; i < n; ++i) patterns.push_back(random_word(12));

        Bytes stream(rng.below(200));
        for (auto& b : stream) b = static_cast<std::uint8_t>('a' + rng.below(3));

        std::vector<Bytes> chunks;
        for (std::size_t pos = 0; pos < stream.size();) {
            std::size_t len = std::min<std::size_t>(rng.range(1, 40), stream.size() - pos);
            chunks.emplace_back(stream.begin() + pos, stream.begin() + pos + len);
            pos += len;
        }

        auto a = AcAutomaton::build(patterns);
        REQUIRE(automaton_counts(a, patterns.size(), chunks) == naive_counts(patterns, stream));
    }
}

TEST_CASE("every node has a total transition table") {
    auto a = AcAutomaton::build({bytes_of("abc"), bytes_of("bca"), bytes_of("c")});
    for (std::uint32_t node = 0; node < a.node_count(); ++node)
        for (int b = 0; b < 256; ++b)
            CHECK(a.step(node, static_cast<std::uint8_t>(b)) < a.node_count());
}
