#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "flowactor/bytes.hpp"

namespace flowactor {

struct BuildError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Multi-pattern byte matcher with failure links compiled away: every node has
// a defined transition for every byte, so scanning is one table lookup per
// input byte and state survives packet boundaries as a single node index.
class AcAutomaton {
public:
    static constexpr std::uint32_t kRoot = 0;

    static AcAutomaton build(const std::vector<Bytes>& patterns) {
        if (patterns.empty()) throw BuildError("no patterns");
        AcAutomaton a;
        a.nodes_.emplace_back();

        // Trie phase.
        for (std::uint32_t pi = 0; pi < patterns.size(); ++pi) {
            const Bytes& p = patterns[pi];
            if (p.empty()) throw BuildError("empty pattern at index " + std::to_string(pi));
            std::uint32_t node = kRoot;
            for (std::uint8_t b : p) {
                std::uint32_t& slot = a.nodes_[node].next[b];
                if (slot == kNone) {
                    slot = static_cast<std::uint32_t>(a.nodes_.size());
                    a.nodes_.emplace_back();
                }
                node = slot;
            }
            a.nodes_[node].out.push_back(pi);
        }

        // Breadth-first failure links, folding each fail node's outputs in and
        // replacing missing transitions with the fail node's, so the final
        // tables are total.
        std::deque<std::uint32_t> queue;
        for (auto& slot : a.nodes_[kRoot].next) {
            if (slot == kNone) {
                slot = kRoot;
            } else {
                a.nodes_[slot].fail = kRoot;
                queue.push_back(slot);
            }
        }
        while (!queue.empty()) {
            std::uint32_t node = queue.front();
            queue.pop_front();
            std::uint32_t fail = a.nodes_[node].fail;
            const auto& fout = a.nodes_[fail].out;
            auto& out = a.nodes_[node].out;
            out.insert(out.end(), fout.begin(), fout.end());
            for (std::size_t b = 0; b < 256; ++b) {
                std::uint32_t& slot = a.nodes_[node].next[b];
                if (slot == kNone) {
                    slot = a.nodes_[fail].next[b];
                } else {
                    a.nodes_[slot].fail = a.nodes_[fail].next[b];
                    queue.push_back(slot);
                }
            }
        }
        return a;
    }

    // Advances one byte; returns the new node. Pattern indices ending at the
    // new position are matches(returned node).
    std::uint32_t step(std::uint32_t node, std::uint8_t byte) const {
        return nodes_[node].next[byte];
    }

    // Complete set of pattern indices that end at this node.
    const std::vector<std::uint32_t>& matches(std::uint32_t node) const {
        return nodes_[node].out;
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    static constexpr std::uint32_t kNone = 0xffffffff;

    struct Node {
        std::array<std::uint32_t, 256> next;
        std::uint32_t fail = kRoot;
        std::vector<std::uint32_t> out;
        Node() { next.fill(kNone); }
    };

    std::vector<Node> nodes_;
};

}  // namespace flowactor
