var shapes = require('./objh');
var evaluated = require('./evalcall');
var doubled = require('./mapcb');
shapes.run();
