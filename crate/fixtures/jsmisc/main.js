var cp = require("child_process");
var solo = require("./solo");
var lazy = require("./lazy");
var host = "localhost";
cp.exec("ping -c 1 " + host, function (err) {
  return err;
});
