#include <string>
#include <vector>

#include "fundus/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return fundus::run_cli(args);
}
