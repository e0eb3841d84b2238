#include <string>
#include <vector>

#include "its/cli.hpp"

int main(int argc, char** argv) {
    return its::run_cli(std::vector<std::string>(argv, argv + argc));
}
