// syncid: standalone front-end for the sync-op classifier.
// `syncid classify <listing> [--debug-map <file>] [--intrinsics <file>] --out <json>`

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mvee/report_io.hpp"
#include "mvee/syncid.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"static sync-op identification"};
    app.require_subcommand(1);
    CLI::App* classify = app.add_subcommand("classify", "classify a disassembly listing");
    std::string listing_path, debug_map_path, intrinsics_path, out_path;
    classify->add_option("listing", listing_path, "listing file")->required();
    classify->add_option("--debug-map", debug_map_path, "ADDR file:line map");
    classify->add_option("--intrinsics", intrinsics_path, "intrinsics list (name arity per line)");
    classify->add_option("--out", out_path, "output json path");

    try {
        app.parse(argc, argv);
        auto instrs = mvee::syncid::parse_listing(read_file(listing_path));
        auto classified = mvee::syncid::classify(instrs);
        std::unordered_map<std::uint64_t, std::pair<std::string, std::uint32_t>> dmap;
        if (!debug_map_path.empty()) dmap = mvee::syncid::parse_debug_map(read_file(debug_map_path));
        auto plan = mvee::syncid::plan_wrapping(instrs, classified, dmap);
        mvee::json j = mvee::to_json(classified, instrs, plan);
        if (!intrinsics_path.empty()) {
            std::vector<std::pair<std::string, std::uint32_t>> intrinsics;
            std::stringstream ss(read_file(intrinsics_path));
            std::string name;
            std::uint32_t arity;
            while (ss >> name >> arity) intrinsics.emplace_back(name, arity);
            j["wrapper_header"] = mvee::syncid::generate_wrapper_header(intrinsics);
        }
        if (out_path.empty()) {
            std::cout << j.dump(2) << "\n";
        } else {
            std::ofstream out(out_path);
            if (!out) throw std::runtime_error("cannot write " + out_path);
            out << j.dump(2);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
