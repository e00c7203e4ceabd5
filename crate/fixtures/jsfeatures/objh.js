var obj = {};
obj.h = function () {
  return 1;
};

function run() {
  return obj.h();
}

exports.run = run;
