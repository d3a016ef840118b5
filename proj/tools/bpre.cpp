// Command-line entry point.
#include <iostream>
#include <vector>

#include "bpre/cli_reporting.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        bpre::RunConfig cfg = bpre::parse_config(args);
        return bpre::run_config(cfg);
    } catch (const bpre::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
