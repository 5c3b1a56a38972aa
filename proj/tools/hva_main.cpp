#include "hva/cli.hpp"

int main(int argc, char** argv) { return hva::cli_main(argc, argv); }
