#include "cli.hpp"

int main(int argc, char** argv) { return debias::cli::Main(argc, argv); }
