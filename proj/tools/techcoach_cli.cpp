#include <string>
#include <vector>

#include "techcoach/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return techcoach::cli_run(args);
}
