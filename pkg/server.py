from flask import Flask, request
from flask_restx import Api, Resource, fields

from reid_service import ReIdService


# Flask application
app = Flask(__name__)
api = Api(app, version='1.0', title='Gait Re-ID service API',
          description='API for gait encoding gallery matching and '
                      'recognition',
          default_label='Re-ID operations', doc='/api/'
          )
# disable verbose 404 error message
app.config['ERROR_404_HELP'] = False

# create Re-ID service
reid_service = ReIdService(app.logger)


# Api models
last_update_response = api.model('LastUpdate', {
    'gallery_updated_at': fields.String(
        required=True,
        description='Timestamp of last gallery update',
        example='2018-07-09 12:00:00'
    )
})

gallery_response = api.model('Gallery', {
    'identities': fields.List(fields.Integer, required=True,
                              description='Enrolled identity labels',
                              example=[1, 2, 3]),
    'sequences': fields.Integer(required=True,
                                description='Enrolled sequences',
                                example=30),
    'width': fields.Integer(required=True,
                            description='Sequence-level encoding width',
                            example=2304)
})

match_request = api.model('MatchRequest', {
    'vector': fields.List(fields.Float, required=True,
                          description='Sequence-level probe encoding'),
    'top_k': fields.Integer(description='Number of ranked identities',
                            default=5, example=5)
})

ranked_identity = api.model('RankedIdentity', {
    'identity': fields.Integer(required=True, example=1),
    'distance': fields.Float(required=True, example=0.42)
})

match_response = api.model('Match', {
    'ranking': fields.List(fields.Nested(ranked_identity), required=True,
                           description='Identities by ascending distance')
})

predict_request = api.model('PredictRequest', {
    'vectors': fields.Raw(
        required=True,
        description='Skeleton-level vectors (AP) or sequence vector (SC)',
        example=[[0.1, 0.2], [0.3, 0.4]]
    ),
    'strategy': fields.String(description='AP or SC', example='AP')
})

predict_response = api.model('Prediction', {
    'identity': fields.Integer(required=True, description='Predicted label',
                               example=1),
    'probabilities': fields.List(fields.Float, required=True,
                                 description='Class distribution')
})


def request_json():
    """Return the JSON request body or abort with 400."""
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        api.abort(400, "Request body must be a JSON object")
    return data


def abort_on_error(result):
    if 'error' in result:
        api.abort(result.get('code', 404), result['error'])
    return result


# routes
@api.route('/last_update')
class LastUpdate(Resource):
    @api.doc('last_update')
    @api.marshal_with(last_update_response)
    def get(self):
        """Get timestamp of last gallery update"""
        return reid_service.last_update()


@api.route('/gallery')
@api.response(404, 'Gallery not found')
class Gallery(Resource):
    @api.doc('gallery')
    @api.marshal_with(gallery_response)
    def get(self):
        """Summarize the enrolled gallery"""
        return abort_on_error(reid_service.gallery())


@api.route('/match')
@api.response(400, 'Invalid probe encoding')
@api.response(404, 'Gallery not found')
class Match(Resource):
    @api.doc('match')
    @api.expect(match_request)
    @api.marshal_with(match_response)
    def post(self):
        """Rank gallery identities for a probe encoding

        Identities are scored by their closest gallery sequence \
        (Euclidean distance); ties go to the smaller label.
        """
        data = request_json()
        if 'vector' not in data:
            api.abort(400, "Missing 'vector'")
        try:
            top_k = int(data.get('top_k', 5))
        except (TypeError, ValueError):
            api.abort(400, "'top_k' must be an integer")
        return abort_on_error(reid_service.match(data['vector'], top_k))


@api.route('/predict')
@api.response(400, 'Invalid encoding')
@api.response(404, 'Recognizer not found')
class Predict(Resource):
    @api.doc('predict')
    @api.expect(predict_request)
    @api.marshal_with(predict_response)
    def post(self):
        """Predict the identity of a sequence with the recognizer

        <b>AP</b> averages the per-skeleton predictions, <b>SC</b> \
        classifies the sequence-level vector.
        """
        data = request_json()
        if 'vectors' not in data:
            api.abort(400, "Missing 'vectors'")
        return abort_on_error(
            reid_service.predict(data['vectors'], data.get('strategy'))
        )


# local webserver
if __name__ == '__main__':
    print("Starting Gait Re-ID service...")
    app.run(host='localhost', port=5010, debug=True)
