#include "guirerank/cli.hpp"

int main(int argc, char** argv) { return guirerank::cli::run(argc, argv); }
