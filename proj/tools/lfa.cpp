#include "lfa/cli.hpp"

int main(int argc, char** argv) { return lfa::cli::run(argc, argv); }
