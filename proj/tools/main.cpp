#include "cli.hpp"

int main(int argc, char** argv) { return photoseq::cli::run({argv, argv + argc}); }
