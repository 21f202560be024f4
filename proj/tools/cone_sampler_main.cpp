#include <iostream>

#include "cone_sampler/cli.hpp"

int main(int argc, char** argv) { return cone_sampler::cli::cli_dispatch(argc, argv, std::cout, std::cerr); }
