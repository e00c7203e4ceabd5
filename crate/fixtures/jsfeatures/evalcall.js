function target() {
  return 2;
}

eval("target()");
