#include "nmt/cli.hpp"

int main(int argc, char** argv) { return nmt::cli::run(argc, argv); }
