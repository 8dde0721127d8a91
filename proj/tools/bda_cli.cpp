#include "bda/harness.hpp"

int main(int argc, char** argv) { return bda::cli_main(argc, argv); }
