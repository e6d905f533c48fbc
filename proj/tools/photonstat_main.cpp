#include <string>
#include <vector>

#include "photonstat/cli.hpp"

int main(int argc, char** argv) {
    return photonstat::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
