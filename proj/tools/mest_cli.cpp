#include "mest/mest.hpp"
int main() { return 0; }
