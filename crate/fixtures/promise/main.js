var exec = require('child_process').exec;

function headRevision() {
  return new Promise(function (resolve, reject) {
    exec('git rev-parse HEAD', function (err, stdout) {
      if (err) {
        reject(err);
      } else {
        resolve(stdout);
      }
    });
  });
}

module.exports = headRevision;
headRevision();
