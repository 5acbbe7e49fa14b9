#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace mvee::syncid {

struct ListingParseError : std::runtime_error {
    ListingParseError(std::size_t line, const std::string& msg)
        : std::runtime_error("listing parse error at line " + std::to_string(line) + ": " + msg),
          line(line) {}
    std::size_t line;
};

struct DuplicateIntrinsic : std::runtime_error {
    explicit DuplicateIntrinsic(const std::string& name)
        : std::runtime_error("duplicate intrinsic: " + name) {}
};

struct Operand {
    std::string symbol;   // register name or memory symbol
    bool memory = false;  // bracketed [sym]
    bool read = false;
    bool write = false;

    friend bool operator==(const Operand&, const Operand&) = default;
};

struct Instr {
    std::uint64_t address = 0;
    std::vector<std::string> prefixes;
    std::string mnemonic;
    std::vector<Operand> operands;
    std::optional<std::pair<std::string, std::uint32_t>> source;  // file, line

    bool has_prefix(std::string_view p) const {
        return std::find(prefixes.begin(), prefixes.end(), p) != prefixes.end();
    }
    bool has_memory_operand() const {
        return std::any_of(operands.begin(), operands.end(),
                           [](const Operand& o) { return o.memory; });
    }
    bool writes_memory() const {
        return std::any_of(operands.begin(), operands.end(),
                           [](const Operand& o) { return o.memory && o.write; });
    }
};

enum class SyncOpClass : std::uint8_t {
    ExplicitAtomic,
    BarrierAdjacentStore,
    UnprotectedAccess,
};

inline const char* sync_class_name(SyncOpClass c) {
    switch (c) {
        case SyncOpClass::ExplicitAtomic: return "explicit-atomic";
        case SyncOpClass::BarrierAdjacentStore: return "barrier-adjacent-store";
        case SyncOpClass::UnprotectedAccess: return "unprotected-access";
    }
    return "?";
}

inline bool is_barrier_mnemonic(std::string_view m) {
    return m == "MFENCE" || m == "SFENCE" || m == "BARRIER";
}

namespace detail {

inline const std::unordered_set<std::string>& known_prefixes() {
    static const std::unordered_set<std::string> p = {"LOCK", "REP", "REPNE"};
    return p;
}

// Read-modify-write mnemonics read and write their destination; everything
// else writes the first operand and reads the rest.
inline bool is_rmw(std::string_view m) {
    return m == "XCHG" || m == "CMPXCHG" || m == "ADD" || m == "SUB" || m == "INC" ||
           m == "DEC" || m == "AND" || m == "OR" || m == "XOR" || m == "XADD";
}

}  // namespace detail

// One instruction per line: `ADDR: [PREFIX ...] MNEMONIC operand[, operand]`.
// Memory operands are bracketed symbol names.
inline std::vector<Instr> parse_listing(std::string_view text) {
    std::vector<Instr> out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;

        std::size_t comment = line.find('#');
        if (comment != std::string_view::npos) line = line.substr(0, comment);
        std::size_t first = line.find_first_not_of(" \t");
        if (first == std::string_view::npos) continue;
        line = line.substr(first);

        std::size_t colon = line.find(':');
        if (colon == std::string_view::npos) throw ListingParseError(line_no, "missing 'ADDR:'");
        Instr instr;
        {
            std::string_view a = line.substr(0, colon);
            if (a.empty()) throw ListingParseError(line_no, "empty address");
            for (char c : a) {
                if (!std::isxdigit(static_cast<unsigned char>(c)))
                    throw ListingParseError(line_no, "bad address");
                instr.address = instr.address * 16 +
                                static_cast<std::uint64_t>(
                                    std::isdigit(static_cast<unsigned char>(c))
                                        ? c - '0'
                                        : std::tolower(static_cast<unsigned char>(c)) - 'a' + 10);
            }
        }
        line = line.substr(colon + 1);

        // split mnemonic part from operand part at the first whitespace run
        // after the prefixes+mnemonic tokens
        std::vector<std::string> head_tokens;
        std::size_t pos = 0;
        while (pos < line.size()) {
            while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
            std::size_t tok_start = pos;
            while (pos < line.size() && !std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
            if (tok_start == pos) break;
            std::string tok(line.substr(tok_start, pos - tok_start));
            std::string upper = tok;
            std::transform(upper.begin(), upper.end(), upper.begin(),
                           [](unsigned char c) { return std::toupper(c); });
            if (detail::known_prefixes().count(upper) && instr.mnemonic.empty()) {
                instr.prefixes.push_back(upper);
                continue;
            }
            if (instr.mnemonic.empty()) {
                instr.mnemonic = upper;
                continue;
            }
            head_tokens.push_back(tok);
            // the rest of the line belongs to the operand list
            std::string rest(line.substr(pos));
            if (!rest.empty()) head_tokens.back() += rest;
            pos = line.size();
        }
        if (instr.mnemonic.empty()) throw ListingParseError(line_no, "missing mnemonic");

        if (!head_tokens.empty()) {
            std::string ops = head_tokens[0];
            std::size_t p = 0;
            std::vector<std::string> raw;
            while (p < ops.size()) {
                std::size_t comma = ops.find(',', p);
                if (comma == std::string::npos) comma = ops.size();
                std::string one = ops.substr(p, comma - p);
                std::size_t b = one.find_first_not_of(" \t");
                std::size_t e = one.find_last_not_of(" \t");
                if (b == std::string::npos) throw ListingParseError(line_no, "empty operand");
                raw.push_back(one.substr(b, e - b + 1));
                p = comma + 1;
            }
            for (std::size_t i = 0; i < raw.size(); ++i) {
                Operand op;
                std::string& r = raw[i];
                if (r.front() == '[') {
                    if (r.back() != ']') throw ListingParseError(line_no, "unterminated '['");
                    op.memory = true;
                    op.symbol = r.substr(1, r.size() - 2);
                    if (op.symbol.empty()) throw ListingParseError(line_no, "empty memory symbol");
                } else {
                    op.symbol = r;
                }
                if (i == 0) {
                    op.write = true;
                    op.read = detail::is_rmw(instr.mnemonic);
                } else {
                    op.read = true;
                }
                instr.operands.push_back(std::move(op));
            }
        }
        out.push_back(std::move(instr));
    }
    return out;
}

// Debug map lines: `ADDR file:line`.
inline std::unordered_map<std::uint64_t, std::pair<std::string, std::uint32_t>> parse_debug_map(
    std::string_view text) {
    std::unordered_map<std::uint64_t, std::pair<std::string, std::uint32_t>> out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        std::size_t first = line.find_first_not_of(" \t");
        if (first == std::string_view::npos) continue;
        if (line[first] == '#') continue;
        std::size_t sp = line.find(' ', first);
        if (sp == std::string_view::npos) throw ListingParseError(line_no, "expected 'ADDR file:line'");
        std::uint64_t addr = 0;
        for (std::size_t i = first; i < sp; ++i) {
            char c = line[i];
            if (!std::isxdigit(static_cast<unsigned char>(c)))
                throw ListingParseError(line_no, "bad address");
            addr = addr * 16 + static_cast<std::uint64_t>(
                                   std::isdigit(static_cast<unsigned char>(c))
                                       ? c - '0'
                                       : std::tolower(static_cast<unsigned char>(c)) - 'a' + 10);
        }
        std::string_view rest = line.substr(sp + 1);
        std::size_t colon = rest.rfind(':');
        if (colon == std::string_view::npos) throw ListingParseError(line_no, "expected file:line");
        std::string file(rest.substr(0, colon));
        std::uint32_t src_line = 0;
        for (char c : rest.substr(colon + 1)) {
            if (!std::isdigit(static_cast<unsigned char>(c)))
                throw ListingParseError(line_no, "bad source line");
            src_line = src_line * 10 + static_cast<std::uint32_t>(c - '0');
        }
        out[addr] = {std::move(file), src_line};
    }
    return out;
}

struct ClassifyResult {
    std::map<std::size_t, SyncOpClass> classes;  // instruction index -> class
    std::uint32_t memory_op_count = 0;           // what strong determinism would order
    std::uint32_t weak_sync_count = 0;           // what weak determinism would order
};

// Category 1: LOCK-prefixed instructions and XCHG with a memory operand
// (implicit LOCK). Category 2: the first store directly after an explicit
// barrier. Category 3: closure over instructions touching any memory symbol
// already referenced by a sync op, iterated to a fixed point.
inline ClassifyResult classify(const std::vector<Instr>& instrs) {
    ClassifyResult res;
    std::unordered_set<std::string> sync_symbols;

    auto note_symbols = [&](const Instr& in) {
        for (const Operand& op : in.operands)
            if (op.memory) sync_symbols.insert(op.symbol);
    };

    for (std::size_t i = 0; i < instrs.size(); ++i) {
        const Instr& in = instrs[i];
        if (in.has_memory_operand()) ++res.memory_op_count;
        bool explicit_atomic =
            in.has_prefix("LOCK") || (in.mnemonic == "XCHG" && in.has_memory_operand());
        if (explicit_atomic) {
            res.classes[i] = SyncOpClass::ExplicitAtomic;
            note_symbols(in);
            continue;
        }
        if (i > 0 && is_barrier_mnemonic(instrs[i - 1].mnemonic) && in.writes_memory()) {
            res.classes[i] = SyncOpClass::BarrierAdjacentStore;
            note_symbols(in);
        }
    }

    // transitive closure: monotone, so iterate until a pass adds nothing
    bool grew = true;
    while (grew) {
        grew = false;
        for (std::size_t i = 0; i < instrs.size(); ++i) {
            if (res.classes.count(i)) continue;
            const Instr& in = instrs[i];
            bool touches = false;
            for (const Operand& op : in.operands)
                touches |= op.memory && sync_symbols.count(op.symbol) != 0;
            if (!touches) continue;
            res.classes[i] = SyncOpClass::UnprotectedAccess;
            note_symbols(in);
            grew = true;
        }
    }

    // Weak determinism orders the standard synchronization primitives only.
    // Those show up as paired explicit atomics on one word (acquire plus
    // release); single-shot atomics are the ad hoc ops weak determinism
    // misses.
    std::unordered_map<std::string, std::uint32_t> atomic_refs;
    for (const auto& [i, cls] : res.classes) {
        if (cls != SyncOpClass::ExplicitAtomic) continue;
        for (const Operand& op : instrs[i].operands)
            if (op.memory) ++atomic_refs[op.symbol];
    }
    for (const auto& [i, cls] : res.classes) {
        if (cls != SyncOpClass::ExplicitAtomic) continue;
        for (const Operand& op : instrs[i].operands)
            if (op.memory && atomic_refs[op.symbol] >= 2) {
                ++res.weak_sync_count;
                break;
            }
    }
    return res;
}

enum class WrapAction : std::uint8_t { WrapCall, IncludeHeader, ManualReview };

inline const char* wrap_action_name(WrapAction a) {
    switch (a) {
        case WrapAction::WrapCall: return "wrap-call";
        case WrapAction::IncludeHeader: return "include-header";
        case WrapAction::ManualReview: return "manual-review";
    }
    return "?";
}

struct WrapEntry {
    std::string file;
    std::uint32_t line = 0;
    SyncOpClass cls = SyncOpClass::ExplicitAtomic;
    WrapAction action = WrapAction::WrapCall;
    std::uint64_t address = 0;
};

struct WrapPlan {
    std::vector<WrapEntry> entries;        // classified instructions with debug info
    std::vector<std::uint64_t> manual_review;  // classified instructions without debug info

    std::set<std::uint32_t> lines() const {
        std::set<std::uint32_t> out;
        for (const auto& e : entries) out.insert(e.line);
        return out;
    }
};

inline WrapPlan plan_wrapping(
    const std::vector<Instr>& instrs, const ClassifyResult& classified,
    const std::unordered_map<std::uint64_t, std::pair<std::string, std::uint32_t>>& debug_map) {
    WrapPlan plan;
    for (const auto& [i, cls] : classified.classes) {
        const Instr& in = instrs[i];
        auto src = in.source;
        if (!src) {
            auto it = debug_map.find(in.address);
            if (it != debug_map.end()) src = it->second;
        }
        if (!src) {
            plan.manual_review.push_back(in.address);
            continue;
        }
        WrapEntry e;
        e.file = src->first;
        e.line = src->second;
        e.cls = cls;
        e.address = in.address;
        // atomics are handled wholesale by the intrinsic-override header;
        // barrier stores and unprotected accesses get individual wrap calls
        e.action = cls == SyncOpClass::ExplicitAtomic ? WrapAction::IncludeHeader
                                                      : WrapAction::WrapCall;
        plan.entries.push_back(std::move(e));
    }
    return plan;
}

// One override line per intrinsic, in input order. Stable output so the
// generated header can be checked in.
inline std::string generate_wrapper_header(
    const std::vector<std::pair<std::string, std::uint32_t>>& intrinsics) {
    std::unordered_set<std::string> seen;
    std::string out;
    out += "// generated: replication wrappers for atomic intrinsics\n";
    for (const auto& [name, arity] : intrinsics) {
        if (!seen.insert(name).second) throw DuplicateIntrinsic(name);
        std::string args;
        std::string fwd;
        for (std::uint32_t i = 0; i < arity; ++i) {
            if (i) {
                args += ", ";
                fwd += ", ";
            }
            args += "a" + std::to_string(i);
            fwd += "a" + std::to_string(i);
        }
        out += "#define " + name + "(" + args + ") MVEE_REPLICATE_" + std::to_string(arity) +
               "(" + name + (arity ? ", " + fwd : "") + ")\n";
    }
    return out;
}

}  // namespace mvee::syncid
