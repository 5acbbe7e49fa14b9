#pragma once

#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mvee/core.hpp"

namespace mvee {

enum class StmtKind : std::uint8_t {
    Lock,
    Unlock,
    CasLoop,
    Store,
    Load,
    Wait,
    Signal,
    Broadcast,
    Syscall,
    Compute,
    Spawn,
    Join,
    PlainStore,
    PlainLoad,
};

struct Statement {
    StmtKind kind = StmtKind::Compute;
    VarId var = 0;    // lock/store/load target; condvar for wait/signal/broadcast
    VarId var2 = 0;   // wait: the paired mutex
    std::uint64_t a = 0;  // cas expect / store value / compute units / spawn|join target
    std::uint64_t b = 0;  // cas new value

    // syscall statements only
    RvpCall sys = RvpCall::Write;
    std::string text;
    bool payload_is_var = false;
    VarId payload_var = 0;

    friend bool operator==(const Statement&, const Statement&) = default;
};

// Declarative multithreaded program. Thread 0 is the initial thread; all
// other threads come to life through its (or their ancestors') spawn
// statements.
struct Workload {
    std::string name = "workload";
    std::vector<std::pair<std::string, std::uint64_t>> vars;  // name, initial value
    std::vector<std::vector<Statement>> threads;

    std::uint32_t var_count() const { return static_cast<std::uint32_t>(vars.size()); }
    std::uint32_t thread_count() const { return static_cast<std::uint32_t>(threads.size()); }

    friend bool operator==(const Workload&, const Workload&) = default;
};

struct ParseError : std::runtime_error {
    ParseError(std::size_t line, std::size_t col, const std::string& msg)
        : std::runtime_error("parse error at " + std::to_string(line) + ":" + std::to_string(col) +
                             ": " + msg),
          line(line), col(col) {}
    std::size_t line;
    std::size_t col;
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg)
        : std::runtime_error("invalid workload: " + msg) {}
};

namespace detail {

struct LineLexer {
    std::string_view text;
    std::size_t line_no;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    }

    bool done() {
        skip_ws();
        return pos >= text.size() || text[pos] == '#';
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_no, pos + 1, msg); }

    std::string_view token() {
        skip_ws();
        if (pos >= text.size()) fail("unexpected end of line");
        std::size_t start = pos;
        while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])) &&
               text[pos] != '#')
            ++pos;
        if (start == pos) fail("unexpected end of line");
        return text.substr(start, pos - start);
    }

    std::uint64_t number() {
        std::string_view t = token();
        std::uint64_t v = 0;
        if (t.empty()) fail("expected a number");
        for (char c : t) {
            if (!std::isdigit(static_cast<unsigned char>(c))) fail("expected a number");
            v = v * 10 + static_cast<std::uint64_t>(c - '0');
        }
        return v;
    }

    std::string quoted() {
        skip_ws();
        if (pos >= text.size() || text[pos] != '"') fail("expected a quoted string");
        ++pos;
        std::string out;
        while (pos < text.size() && text[pos] != '"') out += text[pos++];
        if (pos >= text.size()) fail("unterminated string");
        ++pos;
        return out;
    }
};

}  // namespace detail

inline Workload parse_workload(std::string_view text, std::string name = "workload") {
    Workload w;
    w.name = std::move(name);

    std::unordered_map<std::string, VarId> var_ids;
    auto lookup_var = [&](detail::LineLexer& lex, std::string_view tok) -> VarId {
        auto it = var_ids.find(std::string(tok));
        if (it == var_ids.end()) lex.fail("undeclared var '" + std::string(tok) + "'");
        return it->second;
    };

    int current_thread = -1;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;

        detail::LineLexer lex{line, line_no};
        if (lex.done()) continue;
        std::string_view head = lex.token();

        if (head == "vars") {
            while (!lex.done()) {
                std::string_view decl = lex.token();
                std::size_t eq = decl.find('=');
                if (eq == std::string_view::npos || eq == 0)
                    lex.fail("var declarations look like name=value");
                std::string vname(decl.substr(0, eq));
                std::uint64_t init = 0;
                for (char c : decl.substr(eq + 1)) {
                    if (!std::isdigit(static_cast<unsigned char>(c)))
                        lex.fail("bad initial value for '" + vname + "'");
                    init = init * 10 + static_cast<std::uint64_t>(c - '0');
                }
                if (var_ids.count(vname)) lex.fail("duplicate var '" + vname + "'");
                var_ids.emplace(vname, static_cast<VarId>(w.vars.size()));
                w.vars.emplace_back(vname, init);
            }
            continue;
        }

        if (head == "thread") {
            std::string_view id = lex.token();
            if (id.empty() || id.back() != ':') lex.fail("thread header looks like 'thread N:'");
            id.remove_suffix(1);
            std::uint32_t n = 0;
            for (char c : id) {
                if (!std::isdigit(static_cast<unsigned char>(c))) lex.fail("bad thread index");
                n = n * 10 + static_cast<std::uint32_t>(c - '0');
            }
            if (n != w.threads.size()) lex.fail("threads must be declared in order 0,1,2,...");
            w.threads.emplace_back();
            current_thread = static_cast<int>(n);
            continue;
        }

        if (current_thread < 0) lex.fail("statement outside a thread block");
        Statement s;
        if (head == "lock" || head == "unlock" || head == "load" || head == "plain_load") {
            s.kind = head == "lock" ? StmtKind::Lock
                     : head == "unlock" ? StmtKind::Unlock
                     : head == "load" ? StmtKind::Load
                                       : StmtKind::PlainLoad;
            s.var = lookup_var(lex, lex.token());
        } else if (head == "store" || head == "plain_store") {
            s.kind = head == "store" ? StmtKind::Store : StmtKind::PlainStore;
            s.var = lookup_var(lex, lex.token());
            s.a = lex.number();
        } else if (head == "cas") {
            s.kind = StmtKind::CasLoop;
            s.var = lookup_var(lex, lex.token());
            s.a = lex.number();
            s.b = lex.number();
        } else if (head == "wait") {
            s.kind = StmtKind::Wait;
            s.var = lookup_var(lex, lex.token());
            s.var2 = lookup_var(lex, lex.token());
        } else if (head == "signal" || head == "broadcast") {
            s.kind = head == "signal" ? StmtKind::Signal : StmtKind::Broadcast;
            s.var = lookup_var(lex, lex.token());
        } else if (head == "compute") {
            s.kind = StmtKind::Compute;
            s.a = lex.number();
        } else if (head == "spawn" || head == "join") {
            s.kind = head == "spawn" ? StmtKind::Spawn : StmtKind::Join;
            s.a = lex.number();
        } else if (head == "syscall") {
            s.kind = StmtKind::Syscall;
            std::string_view which = lex.token();
            if (which == "write") {
                s.sys = RvpCall::Write;
                lex.skip_ws();
                if (lex.pos < line.size() && line[lex.pos] == '"') {
                    s.text = lex.quoted();
                } else {
                    s.payload_is_var = true;
                    s.payload_var = lookup_var(lex, lex.token());
                }
            } else if (which == "getpid") {
                s.sys = RvpCall::GetPid;
            } else if (which == "open") {
                s.sys = RvpCall::Open;
                s.text = lex.quoted();
            } else if (which == "read") {
                s.sys = RvpCall::Read;
                s.text = lex.quoted();
            } else {
                lex.fail("unknown syscall '" + std::string(which) + "'");
            }
        } else {
            lex.fail("unknown statement '" + std::string(head) + "'");
        }
        w.threads[static_cast<std::size_t>(current_thread)].push_back(std::move(s));
    }

    // structural validation
    if (w.threads.empty()) throw ValidationError("no threads declared");
    if (w.var_count() >= kAddressSlots) throw ValidationError("too many vars");
    std::vector<int> spawned_by(w.thread_count(), -1);
    for (std::uint32_t t = 0; t < w.thread_count(); ++t) {
        for (const Statement& s : w.threads[t]) {
            if (s.kind == StmtKind::Spawn || s.kind == StmtKind::Join) {
                if (s.a == 0 || s.a >= w.thread_count())
                    throw ValidationError("bad thread index " + std::to_string(s.a));
                if (s.kind == StmtKind::Spawn) {
                    if (spawned_by[s.a] != -1)
                        throw ValidationError("thread " + std::to_string(s.a) + " spawned twice");
                    spawned_by[s.a] = static_cast<int>(t);
                }
            }
        }
    }
    for (std::uint32_t t = 1; t < w.thread_count(); ++t)
        if (spawned_by[t] == -1)
            throw ValidationError("thread " + std::to_string(t) + " is never spawned");
    // spawn edges must form a forest rooted at thread 0 (no forward cycles)
    for (std::uint32_t t = 1; t < w.thread_count(); ++t) {
        std::uint32_t hops = 0;
        std::uint32_t cur = t;
        while (cur != 0) {
            cur = static_cast<std::uint32_t>(spawned_by[cur]);
            if (++hops > w.thread_count()) throw ValidationError("spawn cycle detected");
        }
    }
    return w;
}

inline std::string print_workload(const Workload& w) {
    std::string out = "vars";
    for (const auto& [name, init] : w.vars) out += " " + name + "=" + std::to_string(init);
    out += "\n";
    auto var_name = [&](VarId v) { return w.vars[v].first; };
    for (std::uint32_t t = 0; t < w.thread_count(); ++t) {
        out += "thread " + std::to_string(t) + ":\n";
        for (const Statement& s : w.threads[t]) {
            out += "  ";
            switch (s.kind) {
                case StmtKind::Lock: out += "lock " + var_name(s.var); break;
                case StmtKind::Unlock: out += "unlock " + var_name(s.var); break;
                case StmtKind::CasLoop:
                    out += "cas " + var_name(s.var) + " " + std::to_string(s.a) + " " +
                           std::to_string(s.b);
                    break;
                case StmtKind::Store:
                    out += "store " + var_name(s.var) + " " + std::to_string(s.a);
                    break;
                case StmtKind::Load: out += "load " + var_name(s.var); break;
                case StmtKind::Wait: out += "wait " + var_name(s.var) + " " + var_name(s.var2); break;
                case StmtKind::Signal: out += "signal " + var_name(s.var); break;
                case StmtKind::Broadcast: out += "broadcast " + var_name(s.var); break;
                case StmtKind::Syscall:
                    out += "syscall ";
                    switch (s.sys) {
                        case RvpCall::Write:
                            out += s.payload_is_var ? "write " + var_name(s.payload_var)
                                                    : "write \"" + s.text + "\"";
                            break;
                        case RvpCall::GetPid: out += "getpid"; break;
                        case RvpCall::Open: out += "open \"" + s.text + "\""; break;
                        case RvpCall::Read: out += "read \"" + s.text + "\""; break;
                        default: out += "?"; break;
                    }
                    break;
                case StmtKind::Compute: out += "compute " + std::to_string(s.a); break;
                case StmtKind::Spawn: out += "spawn " + std::to_string(s.a); break;
                case StmtKind::Join: out += "join " + std::to_string(s.a); break;
                case StmtKind::PlainStore:
                    out += "plain_store " + var_name(s.var) + " " + std::to_string(s.a);
                    break;
                case StmtKind::PlainLoad: out += "plain_load " + var_name(s.var); break;
            }
            out += "\n";
        }
    }
    return out;
}

}  // namespace mvee
