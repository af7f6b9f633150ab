#include "d2c/cli.hpp"

int main(int argc, char** argv) { return d2c::cli::run(argc, argv); }
